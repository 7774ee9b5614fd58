from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, make_corpus
from dris import protocol
from dris.index3 import (
    IndexBuildError,
    Layer3Node,
    QueryError,
    build_index,
    dump_index,
    export_metadata,
    extract_metadata,
    index_crawls,
    keyword_score,
    load_index,
    save_index,
    search_l3,
    tokenize,
)
from dris.spider import crawl_domain, crawl_site
from dris.webgraph import Page, Url, load_corpus, parse_domain

U = parse_domain("u.edu.cn")


def page(title="", body="", path="/", host="www.u.edu.cn", lm=1000):
    return Page(Url(host, path), title, tuple(body.split()), (), last_modified=lm)


@pytest.mark.parametrize(
    "text, tokens",
    [("Red Fox, red.", ["red", "fox", "red"]), ("", []), ("a1-b2", ["a1", "b2"]), ("  --  ", [])],
)
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


class TestKeywordScore:
    def test_worked_example(self):
        p = page("red fox", "red dog fox red")
        assert keyword_score(p, "red") == 8

    def test_absent(self):
        assert keyword_score(page("red fox", "red dog"), "cat") == 0

    def test_front_outweighs_back(self):
        front = page("", "x a a b b")
        back = page("", "a b b a a")
        assert keyword_score(back, "x") == 0
        assert keyword_score(page("", "x y z w"), "x") > keyword_score(page("", "y z w x"), "x")
        assert keyword_score(front, "a") > keyword_score(page("", "b b x a a"), "a")

    def test_odd_length_middle_token_is_front(self):
        assert keyword_score(page("", "a m b"), "m") == 2

    @settings(max_examples=200)
    @given(st.lists(st.sampled_from("abcde"), max_size=20), st.lists(st.sampled_from("abcde"), max_size=5),
           st.sampled_from("abcdef"))
    def test_zero_iff_absent(self, body, title, term):
        p = page(" ".join(title), " ".join(body))
        assert (keyword_score(p, term) == 0) == (term not in body and term not in title)


class TestExtractMetadata:
    def test_three_terms_sorted(self):
        rec = extract_metadata(page("", "b a c c c"))
        assert [(k.term, k.score) for k in rec.keywords] == [("c", 4), ("a", 2), ("b", 2)]

    def test_empty_body(self):
        rec = extract_metadata(page("Big News", ""))
        assert rec.abstract == ""
        assert [(k.term, k.score) for k in rec.keywords] == [("big", 5), ("news", 5)]

    def test_abstract_and_cap(self):
        body = " ".join(f"w{i}" for i in range(80))
        rec = extract_metadata(page("", body), abstract_token_limit=30, keywords_per_page=50)
        assert rec.abstract.split() == [f"w{i}" for i in range(30)]
        assert len(rec.keywords) == 50

    def test_carries_encoding(self):
        p = replace(page("t", "b"), encoding="gb2312")
        assert extract_metadata(p).encoding == "gb2312"


class TestBuildIndex:
    def test_empty(self):
        index = build_index([], U)
        assert index.postings == {} and index.records == {}

    def test_single_page(self):
        p = page("red fox", "red dog fox red")
        index = build_index([p], U)
        assert index.postings["red"] == (("http://www.u.edu.cn/", 8),)

    def test_duplicate_url(self):
        with pytest.raises(IndexBuildError):
            build_index([page("a"), page("b")], U)

    def test_foreign_host(self):
        with pytest.raises(IndexBuildError):
            build_index([page(host="www.v.edu.cn")], U)

    def test_scanned_host_allowed(self):
        index = build_index([page(host="10.0.0.3")], U, scanned_hosts={"10.0.0.3"})
        assert "http://10.0.0.3/" in index.records

    def test_postings_sorted(self, tiny_corpus):
        for d in tiny_corpus.dns:
            index = index_crawls(crawl_domain(parse_domain(d), tiny_corpus), parse_domain(d))
            for plist in index.postings.values():
                assert list(plist) == sorted(plist, key=lambda us: (-us[1], us[0]))
                assert all(s > 0 and u in index.records for u, s in plist)

    def test_deterministic_bytes(self, tiny_corpus):
        d = parse_domain("u0.edu.cn")
        a = dump_index(index_crawls(crawl_domain(d, tiny_corpus), d))
        b = dump_index(index_crawls(crawl_domain(d, tiny_corpus), d))
        assert a == b


class TestSearch:
    @pytest.fixture
    def index(self):
        return build_index([
            page("alpha", "beta beta", "/1"),
            page("", "alpha beta", "/2"),
            page("", "gamma", "/3"),
        ], U)

    def test_single_term_is_postings(self, index):
        assert [(r.url, r.score) for r in search_l3(index, ["alpha"])] == list(index.postings["alpha"])

    def test_and_sums(self, index):
        results = search_l3(index, ["alpha", "beta"])
        assert [(r.url, r.score) for r in results] == [("http://www.u.edu.cn/1", 8), ("http://www.u.edu.cn/2", 3)]
        assert results[0].title == "alpha"
        assert results[0].sources == ("u.edu.cn",)

    def test_absent_term(self, index):
        assert search_l3(index, ["alpha", "zeta"]) == []

    def test_empty_query(self, index):
        with pytest.raises(QueryError):
            search_l3(index, [" ", ""])

    def test_query_is_tokenized(self, index):
        assert search_l3(index, ["Alpha,Beta"]) == search_l3(index, ["alpha", "beta"])

    def test_truncation(self, index):
        assert len(search_l3(index, ["beta"], max_results=1)) == 1

    def test_external_pages_not_searchable(self):
        corpus = make_corpus({
            "www.a.u.edu.cn": {"/": ("a", "", ["http://www.b.v.edu.cn/"])},
            "www.b.v.edu.cn": {"/": ("unique", "", [])},
        })
        d = parse_domain("a.u.edu.cn")
        index = index_crawls([crawl_site("www.a.u.edu.cn", corpus.fetch)], d)
        assert search_l3(index, ["unique"]) == []
        assert [r.url for r in index.external] == ["http://www.b.v.edu.cn/"]


class TestExport:
    @pytest.fixture
    def linked(self):
        return make_corpus({
            "www.a.edu.cn": {
                "/": ("a", "", ["http://www.a.edu.cn/x", "http://www.b.edu.cn/"]),
                "/x": ("x", "", ["http://www.b.edu.cn/"]),
            },
            "www.b.edu.cn": {"/": ("b", "", [])},
        })

    def test_own_pages_only(self, tiny_corpus):
        d = parse_domain("u0.edu.cn")
        hosts = tiny_corpus.dns_lookup(d)
        index = build_index([p for p in tiny_corpus.pages() if p.host in hosts], d)
        assert len(export_metadata(index)) == len(index.records)

    def test_external_occurrences(self, linked):
        index = index_crawls([crawl_site("www.a.edu.cn", linked.fetch)], parse_domain("a.edu.cn"))
        records = export_metadata(index)
        copies = [r for r in records if r.url == "http://www.b.edu.cn/"]
        assert [r.origin_site for r in copies] == ["www.a.edu.cn"] * 2
        assert records == sorted(records, key=lambda r: (r.url, r.origin_site))

    def test_since_max_is_empty(self, linked):
        index = index_crawls([crawl_site("www.a.edu.cn", linked.fetch)], parse_domain("a.edu.cn"))
        newest = max(r.last_modified for r in export_metadata(index))
        assert export_metadata(index, since=newest) == []

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000))
    def test_incremental_completeness(self, seed):
        from dris.webgraph import CorpusConfig, generate_corpus

        corpus = generate_corpus(CorpusConfig(domains=2, pages_per_site=4), seed)
        d = parse_domain("u0.edu.cn")
        index = index_crawls(crawl_domain(d, corpus), d)
        full = export_metadata(index)
        times = sorted({r.last_modified for r in full})
        cut = times[len(times) // 2]
        newer = export_metadata(index, since=cut)
        older = [r for r in full if r.last_modified <= cut]
        assert sorted(newer + older, key=lambda r: (r.url, r.origin_site, r.last_modified)) == \
            sorted(full, key=lambda r: (r.url, r.origin_site, r.last_modified))

    def test_new_link_bumps_external_timestamp(self, linked):
        d = parse_domain("a.edu.cn")
        before = index_crawls([crawl_site("www.a.edu.cn", linked.fetch)], d)
        cursor = max(r.last_modified for r in export_metadata(before))
        root = linked.fetch(Url.parse("http://www.a.edu.cn/"))
        target = Url.parse("http://www.b.edu.cn/")
        edited = linked.with_page(replace(root, links=root.links + (target,), last_modified=cursor + 5))
        after = index_crawls([crawl_site("www.a.edu.cn", edited.fetch)], d)
        delta = export_metadata(after, since=cursor)
        assert [r.origin_site for r in delta if r.url == str(target)] == ["www.a.edu.cn"] * 3


class TestPersistence:
    def test_round_trip(self, tiny_corpus, tmp_path):
        d = parse_domain("u1.edu.cn")
        index = index_crawls(crawl_domain(d, tiny_corpus), d)
        save_index(index, tmp_path / "i.jsonl")
        assert load_index(tmp_path / "i.jsonl") == index

    def test_golden_index(self):
        corpus = load_corpus(GOLDEN / "corpus")
        d = parse_domain("u0.edu.cn")
        index = index_crawls(crawl_domain(d, corpus, scan=True), d, scanned_hosts={"10.0.0.1"})
        assert dump_index(index) == (GOLDEN / "u0.index.jsonl").read_text(encoding="utf-8")
        assert load_index(GOLDEN / "u0.index.jsonl") == index

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"format": "something-else"}\n')
        with pytest.raises(IndexBuildError):
            load_index(path)


class TestNode:
    def test_refresh_and_search(self, tiny_corpus):
        d = parse_domain("u0.edu.cn")
        node = Layer3Node(d)
        assert len(node.index) == 0
        node.refresh(tiny_corpus)
        assert len(node.index) == 6
        term = next(iter(node.index.postings))
        resp = node.search(protocol.QueryRequest((term,), "r1"))
        assert resp.request_id == "r1"
        assert list(resp.results) == search_l3(node.index, [term])
        assert not protocol.validate(resp)

    def test_metadata_pages(self, tiny_corpus):
        node = Layer3Node(parse_domain("u0.edu.cn"))
        node.refresh(tiny_corpus)
        resp = node.metadata()
        assert not resp.truncated
        assert list(resp.records) == export_metadata(node.index)
        assert node.metadata(resp.max_timestamp).records == ()
