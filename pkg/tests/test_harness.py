from __future__ import annotations

import json

import pytest

from dris import protocol
from dris.federation import merge_results
from dris.harness import ConfigError, Deployment, ScenarioConfig, fresh_edit, metadata_ratio, run_scenario
from dris.index3 import extract_metadata
from dris.webgraph import CorpusConfig, generate_corpus

TINY = CorpusConfig(domains=2, sites_per_domain=2, pages_per_site=3)


def test_tiny_scenario():
    report = run_scenario(ScenarioConfig(corpus=TINY, seed=1))
    assert report.pages == 12
    assert report.coverage_fraction == 1.0
    assert report.update_latency == 1
    assert len(report.result_counts) == 5
    assert report.harvest_bytes > 0 and report.crawl_bytes > 0


def test_deterministic():
    cfg = ScenarioConfig(corpus=TINY, seed=4, cycles=2)
    assert run_scenario(cfg) == run_scenario(cfg)


def test_loopback_matches_inprocess():
    cfg = ScenarioConfig(corpus=TINY, seed=2)
    assert run_scenario(cfg) == run_scenario(ScenarioConfig(corpus=TINY, seed=2, transport="loopback"))


def test_end_to_end_merge_consistency():
    corpus = generate_corpus(CorpusConfig(domains=4, parent_domains=("edu.cn", "ac.cn"), cross_site_link_prob=0.6), 3)
    cfg = ScenarioConfig(corpus=CorpusConfig(domains=4, parent_domains=("edu.cn", "ac.cn")))
    with Deployment(corpus, cfg) as dep:
        dep.cycle()
        for terms in (["red"], ["fox"], ["red", "fox"]):
            top = dep.query(terms, "e2e")
            lists = []
            for name in cfg.layer2:
                resp = dep.connect(dep.registry.resolve(name)).search(protocol.QueryRequest(tuple(terms), "e2e"))
                lists.append((name, resp.results))
            assert list(top.results) == merge_results(lists)


def test_fresh_edit_makes_token_a_keyword():
    corpus = generate_corpus(CorpusConfig(domains=1, body_tokens=(200, 300)), 0)
    page = next(corpus.pages())
    edited = fresh_edit(page, "zfresh0", 99)
    assert "zfresh0" in extract_metadata(edited).keyword_map()
    assert edited.last_modified == 99


def test_metadata_ratio_shrinks_with_body():
    small = generate_corpus(CorpusConfig(body_tokens=(5, 10)), 0)
    big = generate_corpus(CorpusConfig(body_tokens=(1000, 1200)), 0)
    assert metadata_ratio(big.pages()) < metadata_ratio(small.pages())


def test_explicit_queries():
    report = run_scenario(ScenarioConfig(corpus=TINY, queries=(("red",), ("nonexistentterm",)), modifications=0))
    assert report.result_counts[1] == 0
    assert report.update_latency is None


class TestConfig:
    def test_round_trip(self):
        cfg = ScenarioConfig(corpus=TINY, seed=3, queries=(("a", "b"),))
        assert ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"sede": 1})

    def test_layer2_outside_top(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(top="cn", layer2=("edu.org",), corpus=CorpusConfig(parent_domains=("edu.org",)))

    def test_parent_without_layer2(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(corpus=CorpusConfig(parent_domains=("edu.cn", "ac.cn")), layer2=("edu.cn",))

    def test_bad_transport(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(transport="carrier-pigeon")

    def test_bad_corpus(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"corpus": {"domains": 0}})

    def test_example_file(self):
        from pathlib import Path

        path = Path(__file__).parents[1] / "scenarios" / "tiny.json"
        assert ScenarioConfig.load(path).corpus.domains == 2


def test_report_json():
    report = run_scenario(ScenarioConfig(corpus=TINY))
    data = json.loads(report.to_json())
    assert data["coverage_fraction"] == 1.0
    assert set(data) >= {"crawl_bytes", "harvest_bytes", "recrawl_bytes_equivalent", "update_latency",
                         "query_latency_ms", "result_counts"}
