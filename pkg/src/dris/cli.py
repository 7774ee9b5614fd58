"""``dris`` command line.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from pathlib import Path

from dris import protocol
from dris.federation import FederatedSearchError, Registry, TopNode, fanout_search
from dris.harness import ConfigError, ScenarioConfig, run_scenario
from dris.harvest2 import HarvestError, Layer2Node, load_store, save_store
from dris.index3 import Layer3Node, index_crawls, load_index, save_index
from dris.records import ServiceDescriptor
from dris.server import NodeServer
from dris.spider import CrawlError, crawl_hosts, scan_addresses
from dris.transport import HttpClient, LocalClient, RemoteError, client_for, connect_endpoint
from dris.webgraph import CorpusConfig, generate_corpus, load_corpus, page_bytes, parse_domain, save_corpus

log = logging.getLogger("dris")


class CommandError(RuntimeError):
    pass


def _endpoint(value: str) -> str:
    """Bare paths become absolute ``file://`` endpoints."""
    if "://" in value:
        return value
    return Path(value).resolve().as_uri()


def _children(values) -> dict:
    """Child clients keyed by domain for files, by URL for remote nodes."""
    out = {}
    for value in values:
        client = client_for(_endpoint(value))
        out[str(client.node.domain) if isinstance(client, LocalClient) else value] = client
    return out


def cmd_gen(args) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    for key in ("domains", "sites_per_domain", "pages_per_site", "vocabulary_size",
                "cross_site_link_prob", "unregistered_fraction"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    corpus = generate_corpus(CorpusConfig.from_dict(data), args.seed)
    save_corpus(corpus, args.out)
    print(f"wrote {corpus.page_count} pages on {len(corpus.sites)} sites to {args.out}")
    return 0


def _crawl(args):
    corpus = load_corpus(args.corpus)
    domain = parse_domain(args.domain)
    hosts = scan_addresses(corpus, domain) if args.scan else corpus.dns_lookup(domain)
    return domain, hosts, crawl_hosts(hosts, corpus.fetch)


def cmd_crawl(args) -> int:
    _, _, crawls = _crawl(args)
    for c in crawls:
        for p in c.own_pages:
            print(json.dumps({"origin": c.origin_site, "url": str(p.url), "bytes": page_bytes(p), "external": False}))
        for url, p in c.external_pages:
            print(json.dumps({"origin": c.origin_site, "url": str(url), "bytes": page_bytes(p), "external": True}))
    return 0


def cmd_index(args) -> int:
    domain, hosts, crawls = _crawl(args)
    index = index_crawls(crawls, domain, scanned_hosts=hosts)
    save_index(index, args.out)
    print(f"indexed {len(index.records)} pages ({len(index.external)} external copies) into {args.out}")
    return 0


def cmd_harvest(args) -> int:
    domain = parse_domain(args.domain)
    store = load_store(args.store) if args.store and Path(args.store).exists() else None
    node = Layer2Node(domain, store=store, overlap_mode=args.overlap)
    node.attach(_children(args.child))
    report = node.run_harvest()
    save_store(node.store, args.out)
    sys.stdout.write(protocol.encode(report).decode() + "\n")
    return 0


def cmd_serve(args) -> int:
    if args.layer == "3":
        if not args.index:
            raise CommandError("--layer 3 needs --index")
        index = load_index(args.index)
        node = Layer3Node(index.domain, index)
    elif args.layer == "2":
        if not args.domain:
            raise CommandError("--layer 2 needs --domain")
        store = load_store(args.store) if args.store and Path(args.store).exists() else None
        node = Layer2Node(parse_domain(args.domain), store=store)
        node.attach(_children(args.child))
    else:
        registry = Registry.load(args.registry) if args.registry and Path(args.registry).exists() else Registry()
        node = TopNode(parse_domain(args.domain or "cn"), registry, connect_endpoint, args.timeout)
    stop = threading.Event()

    def harvest():
        try:
            node.run_harvest()
            if args.store:
                save_store(node.store, args.store)
        except HarvestError as e:
            log.warning("%s", e)

    # a layer-2 node with children answers from a fresh harvest, not an empty store
    if args.layer == "2" and args.child:
        harvest()
    server = NodeServer(node, args.host, args.port)
    print(f"serving layer {args.layer} node {node.node_id} at {server.url}", flush=True)
    if args.layer == "2" and args.harvest_every:
        def loop():
            while not stop.wait(args.harvest_every):
                harvest()
        threading.Thread(target=loop, daemon=True).start()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        server.httpd.server_close()
    return 0


def _print_table(results) -> None:
    print(f"{'#':>3}  {'score':>5}  url  title")
    for i, r in enumerate(results, 1):
        print(f"{i:>3}  {r.score:>5}  {r.url}  {r.title}")


def cmd_query(args) -> int:
    terms = [t for t in args.terms if t.strip()]
    if not terms:
        raise CommandError("query has no terms")
    if args.endpoint:
        req = protocol.QueryRequest(tuple(terms), "cli", args.max_results, args.scope)
        try:
            resp = HttpClient(args.endpoint, args.timeout + 1).search(req)
        except RemoteError as e:
            for s in e.error.child_status:
                print(f"{s.node}: {s.status} {s.detail}", file=sys.stderr)
            raise CommandError(str(e)) from None
        results, statuses = resp.results, resp.child_status
    else:
        registry = Registry.load(args.registry)
        try:
            out = fanout_search(registry, args.scope, terms, args.timeout, connect_endpoint,
                                max_results=args.max_results, request_id="cli")
        except FederatedSearchError as e:
            for s in e.child_status:
                print(f"{s.node}: {s.status} {s.detail}", file=sys.stderr)
            raise CommandError(str(e)) from None
        results, statuses = out.results, out.child_status
    _print_table(results)
    for s in statuses:
        if s.status != "ok":
            print(f"warning: {s.node} {s.status}: {s.detail}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    report = run_scenario(ScenarioConfig.load(args.scenario))
    print(report.to_json())
    return 0


def cmd_register(args) -> int:
    path = Path(args.registry)
    registry = Registry.load(path) if path.exists() else Registry()
    desc = ServiceDescriptor.for_domain(parse_domain(args.domain), _endpoint(args.endpoint), args.kind)
    registry.register(desc)
    registry.save(path)
    print(f"registered {desc.class_name} -> {desc.endpoint}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dris", description="Domain-partitioned federated search.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON corpus config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--domains", type=int)
    p.add_argument("--sites", dest="sites_per_domain", type=int)
    p.add_argument("--pages", dest="pages_per_site", type=int)
    p.add_argument("--vocabulary", dest="vocabulary_size", type=int)
    p.add_argument("--cross-links", dest="cross_site_link_prob", type=float)
    p.add_argument("--unregistered", dest="unregistered_fraction", type=float)
    p.set_defaults(func=cmd_gen)

    for name, func, help_ in (("crawl", cmd_crawl, "crawl a domain, print a JSON-lines manifest"),
                              ("index", cmd_index, "crawl and index a domain into an index file")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--corpus", required=True)
        p.add_argument("--domain", required=True)
        p.add_argument("--scan", action="store_true", help="include hosts found by address scan")
        if name == "index":
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("harvest", help="run one harvest cycle into a layer-2 store file")
    p.add_argument("--domain", required=True)
    p.add_argument("--child", action="append", required=True, help="index file or http:// endpoint")
    p.add_argument("--store", help="existing store to continue from")
    p.add_argument("--out", required=True)
    p.add_argument("--overlap", choices=("sites", "occurrences"), default="sites")
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("serve", help="serve a node over HTTP")
    p.add_argument("--layer", choices=("3", "2", "top"), required=True)
    p.add_argument("--index")
    p.add_argument("--store")
    p.add_argument("--domain")
    p.add_argument("--child", action="append", default=[])
    p.add_argument("--registry")
    p.add_argument("--harvest-every", type=float, default=0.0, help="seconds between layer-2 harvests")
    p.add_argument("--timeout", type=float, default=2.0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("query", help="federated search under a domain")
    p.add_argument("--scope", required=True)
    p.add_argument("--registry", default="registry.tsv")
    p.add_argument("--endpoint", help="query a running top node instead of fanning out locally")
    p.add_argument("--max-results", type=int, default=20)
    p.add_argument("--timeout", type=float, default=2.0)
    p.add_argument("terms", nargs="+")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="run a scenario and print its metrics report")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("register", help="add a service to a registry table")
    p.add_argument("--registry", default="registry.tsv")
    p.add_argument("--domain", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--kind", choices=protocol.KINDS, required=True)
    p.set_defaults(func=cmd_register)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CommandError, ConfigError, CrawlError, HarvestError, OSError, ValueError, LookupError, RemoteError) as e:
        print(f"dris: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
