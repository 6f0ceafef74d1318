"""Synthetic corpus generation: templates, priors, artifact round trips."""

import dataclasses

import numpy as np
import pytest

from landsift import ocr_ingest, textprep
from landsift.labels import DEFAULT_KEYWORDS, DEFAULT_SCHEMA
from landsift.synth import (
    DEFAULT_PRIORS,
    SynthConfig,
    SynthError,
    build_corpus_artifacts,
    generate_synthetic_corpus,
    join_gold,
    read_gold,
    verify_templates,
    write_artifacts,
)


def test_verify_templates_accepts_defaults():
    verify_templates()


def test_verify_templates_catches_collisions():
    # a stem that suddenly matches a neutral subject must fail the screen
    table = {k: list(v) for k, v in DEFAULT_KEYWORDS.items()}
    table["Weather"].append("zugang")
    with pytest.raises(SynthError, match="matches"):
        verify_templates(table)


def test_generation_is_deterministic():
    a = generate_synthetic_corpus(SynthConfig(n_sentences=300, rng_seed=11))
    b = generate_synthetic_corpus(SynthConfig(n_sentences=300, rng_seed=11))
    assert a == b
    c = generate_synthetic_corpus(SynthConfig(n_sentences=300, rng_seed=12))
    assert a[0] != c[0]


def test_sentences_unique_and_valid():
    sentences, gold = generate_synthetic_corpus(SynthConfig(n_sentences=500, rng_seed=2))
    assert len(sentences) == len(gold) == 500
    assert len(set(sentences)) == 500
    assert all(textprep.check_validity(t) is None for t in sentences)


def test_marginals_track_priors():
    _, gold = generate_synthetic_corpus(SynthConfig(n_sentences=4000, rng_seed=3))
    marginals = np.mean([g.combined for g in gold], axis=0)
    for j, label in enumerate(DEFAULT_SCHEMA.all_labels):
        assert abs(marginals[j] - DEFAULT_PRIORS[label]) < 0.03, label


def test_ref_codes_forced():
    cfg = SynthConfig(n_sentences=50, rng_seed=4, ref_code_prob=1.0)
    sentences, _ = generate_synthetic_corpus(cfg)
    assert all("(Az " in t for t in sentences)


def test_pages_survive_the_text_pipeline():
    # every generated sentence must come back verbatim from its page
    cfg = SynthConfig(n_sentences=400, rng_seed=5)
    artifacts = build_corpus_artifacts(cfg)
    sentences = textprep.process_pages(artifacts.pages)
    assert len(sentences) == 400
    assert all(s.valid for s in sentences)
    assert {s.text for s in sentences} == set(artifacts.gold_by_text)


def test_join_gold_maps_ids():
    cfg = SynthConfig(n_sentences=120, rng_seed=6)
    artifacts = build_corpus_artifacts(cfg)
    sentences = textprep.process_pages(artifacts.pages)
    gold = join_gold(sentences, artifacts.gold_by_text)
    assert set(gold) == {s.sentence_id for s in sentences}

    broken = [dataclasses.replace(sentences[0], text="Etwas ganz anderes steht hier.")]
    with pytest.raises(SynthError, match="no gold entry"):
        join_gold(broken, artifacts.gold_by_text)


def test_artifact_files_round_trip(tmp_path):
    cfg = SynthConfig(n_sentences=150, rng_seed=7)
    artifacts = build_corpus_artifacts(cfg)
    paths = write_artifacts(artifacts, tmp_path)
    assert read_gold(paths["gold"]) == artifacts.gold_by_text
    assert ocr_ingest.read_pages(paths["pages"]) == artifacts.pages
    metas = ocr_ingest.load_document_meta(paths["meta"])
    assert set(metas) == {m["doc_id"] for m in artifacts.metas}


def test_geo_fixture_shape():
    cfg = SynthConfig(n_sentences=150, rng_seed=8, n_areas=5)
    artifacts = build_corpus_artifacts(cfg)

    features = artifacts.areas_geojson["features"]
    assert len(features) == 5
    assert [f["properties"]["area_id"] for f in features] == [f"A-{a:02d}" for a in range(5)]
    assert features[0]["properties"]["category"] == "Kippe"
    ring = features[0]["geometry"]["coordinates"][0]
    assert ring[0] == ring[-1]

    bands = artifacts.weather_geojson["features"]
    assert [b["properties"]["band_value"] for b in bands] == [5.0, 15.0, 30.0]


def test_document_meta_references_known_areas():
    cfg = SynthConfig(n_sentences=200, rng_seed=9, n_areas=4)
    artifacts = build_corpus_artifacts(cfg)
    known = {f["properties"]["area_id"] for f in artifacts.areas_geojson["features"]}
    for meta in artifacts.metas:
        assert meta["area_ids"]
        assert set(meta["area_ids"]) <= known


def test_config_validation():
    with pytest.raises(SynthError):
        SynthConfig(n_sentences=-1).validate()
    with pytest.raises(SynthError):
        SynthConfig(priors={"Weather": 1.5}).validate()
    with pytest.raises(SynthError):
        SynthConfig(priors={"Sunshine": 0.1}).validate()
    with pytest.raises(SynthError):
        SynthConfig(signal=1.2).validate()
    with pytest.raises(SynthError):
        SynthConfig(pages_per_doc=(2, 1)).validate()
    with pytest.raises(SynthError):
        SynthConfig(n_areas=0).validate()


def test_config_json_round_trip():
    cfg = SynthConfig(n_sentences=123, signal=0.7, noise=0.1, rng_seed=9, n_areas=3)
    assert SynthConfig.from_json(cfg.to_json()) == cfg
