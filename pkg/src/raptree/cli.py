"""Command-line entry point. Runs in-process by default; ``--server URL`` forwards to the HTTP service."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any, Sequence

import httpx
from pydantic import BaseModel

from raptree import engine, service
from raptree.schemas import (
    AddRequest,
    AskRequest,
    AskResponse,
    BenchRequest,
    BenchResponse,
    BuildRequest,
    BuildResponse,
    QueryRequest,
    QueryResponse,
    RemoveRequest,
    StatsModel,
    UpdateResponse,
)


class CliError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--mock-llm", action="store_true", default=None, help="offline mock embedder and summarizer")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--clustering", choices=["two_step", "one_step"], default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file with settings (lowest precedence after defaults)")
    p.add_argument("--server", default=None, help="send the command to a running service at this URL")
    p.add_argument("--json", action="store_true", help="print the raw JSON response")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="raptree", description="Hierarchical summary-tree retrieval index.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common], help="chunk, embed and build a tree over a corpus")
    p.add_argument("corpus_dir")
    p.add_argument("index_dir")

    p = sub.add_parser("add", parents=[common], help="insert one document into an index")
    p.add_argument("index_dir")
    p.add_argument("file")
    p.add_argument("--doc-id", default=None, help="document id (default: file name)")
    p.add_argument("--greedy", action="store_true", default=None, help="assign without updating the mixtures")

    p = sub.add_parser("remove", parents=[common], help="remove one document from an index")
    p.add_argument("index_dir")
    p.add_argument("doc_id")
    p.add_argument("--recluster-on-delete", action="store_true", default=None)

    p = sub.add_parser("query", parents=[common], help="collapsed-tree retrieval")
    p.add_argument("index_dir")
    p.add_argument("query")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--token-limit", type=int, default=None)

    p = sub.add_parser("ask", parents=[common], help="retrieve, then condense into one query-focused context")
    p.add_argument("index_dir")
    p.add_argument("query")
    p.add_argument("--retriever", choices=["tree", "naive"], default=None)
    p.add_argument("--k0", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--expand", action="store_true", default=None)
    p.add_argument("--answer", action="store_true", default=None)

    p = sub.add_parser("stats", parents=[common], help="tree statistics")
    p.add_argument("index_dir")

    p = sub.add_parser("bench-split", parents=[common], help="build on a fraction, insert the rest, compare to a rebuild")
    p.add_argument("corpus_dir")
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--per-document", action="store_true", help="one summary round per inserted document")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    return parser


FLAG_NAMES = (
    "mock_llm", "seed", "clustering", "embed_dim", "k", "token_limit", "k0", "budget",
    "expand", "answer", "retriever", "greedy", "recluster_on_delete", "fraction",
)


def settings_from_args(args: argparse.Namespace) -> engine.Settings:
    flags = {name: getattr(args, name, None) for name in FLAG_NAMES}
    return engine.resolve_settings(flags, config_file=args.config)


def _print_stats(st: StatsModel) -> None:
    print(st.table)


def render(result: BaseModel) -> None:
    if isinstance(result, BuildResponse):
        print(f"indexed {result.documents} documents, {result.chunks} chunks into {result.index_dir}")
        print(f"summary calls: {result.summary_calls}")
        _print_stats(result.stats)
    elif isinstance(result, UpdateResponse):
        print(f"new nodes: {len(result.new_node_ids)} (leaves: {len(result.new_leaves)})")
        print(f"removed nodes: {len(result.removed_node_ids)}")
        for layer, ids in result.changed_cluster_ids.items():
            print(f"changed clusters on layer {layer}: {' '.join(ids)}")
        print(f"resummarized: {' '.join(result.resummarized_node_ids) or '-'}")
        print(f"summary calls: {result.summary_call_count}")
        print(f"new layers: {result.new_layers_created}  split attempts: {result.split_attempts}  splits: {result.splits}")
        print(f"mixture parameters changed: {'yes' if result.model_changed else 'no'}")
    elif isinstance(result, QueryResponse):
        for rank, h in enumerate(result.hits, 1):
            print(f"[{rank}] sim={h.similarity:.6f} layer={h.layer} id={h.node_id} tokens={h.token_count}")
            print(h.text)
            print()
        print(f"total tokens: {result.total_tokens}")
    elif isinstance(result, AskResponse):
        print(result.context)
        print()
        print(f"context tokens: {result.context_tokens}  documents: {len(result.documents)}  "
              f"clusters: {result.clusters}  summary calls: {result.summary_calls}")
        if result.answer is not None:
            print(f"answer: {result.answer}")
            print(f"status: {'answered' if result.answered else 'unanswered'}")
    elif isinstance(result, StatsModel):
        _print_stats(result)
    elif isinstance(result, BenchResponse):
        print(result.table)
    else:
        print(result.model_dump_json(indent=2))


def _request(args: argparse.Namespace, s: engine.Settings) -> tuple[str, str, BaseModel | dict[str, Any]]:
    over = {"mock_llm": args.mock_llm, "seed": args.seed, "clustering": args.clustering, "embed_dim": args.embed_dim}
    over = {k: v for k, v in over.items() if v is not None}
    cmd = args.command
    if cmd == "build":
        return "POST", "/build", BuildRequest(corpus_dir=args.corpus_dir, index_dir=args.index_dir, **over)
    if cmd == "add":
        return "POST", "/add", AddRequest(
            index_dir=args.index_dir, path=args.file, doc_id=args.doc_id, greedy=s.greedy, **over
        )
    if cmd == "remove":
        return "POST", "/remove", RemoveRequest(
            index_dir=args.index_dir, doc_id=args.doc_id, recluster=s.recluster_on_delete, **over
        )
    if cmd == "query":
        return "POST", "/query", QueryRequest(
            index_dir=args.index_dir, query=args.query, k=s.k, token_limit=s.token_limit, **over
        )
    if cmd == "ask":
        return "POST", "/ask", AskRequest(
            index_dir=args.index_dir, query=args.query, retriever=s.retriever, k0=s.k0,
            budget=s.budget, expand=s.expand, answer=s.answer, **over,
        )
    if cmd == "stats":
        return "GET", "/stats", {"index_dir": args.index_dir}
    if cmd == "bench-split":
        return "POST", "/bench-split", BenchRequest(
            corpus_dir=args.corpus_dir, fraction=s.fraction, per_document=args.per_document, **over
        )
    raise CliError(f"{cmd} cannot be sent to a server")


RESPONSES: dict[str, type[BaseModel]] = {
    "/build": BuildResponse, "/add": UpdateResponse, "/remove": UpdateResponse, "/query": QueryResponse,
    "/ask": AskResponse, "/stats": StatsModel, "/bench-split": BenchResponse,
}


def run_remote(args: argparse.Namespace, s: engine.Settings, client: httpx.Client | None = None) -> BaseModel:
    method, path, payload = _request(args, s)
    own = client is None
    client = client or httpx.Client(base_url=args.server, timeout=None)
    try:
        if method == "GET":
            resp = client.get(path, params=payload)  # type: ignore[arg-type]
        else:
            resp = client.post(path, json=payload.model_dump())  # type: ignore[union-attr]
    except httpx.HTTPError as exc:
        raise CliError(f"cannot reach {args.server}: {exc}") from exc
    finally:
        if own:
            client.close()
    if resp.status_code != 200:
        try:
            body = resp.json()
            detail = body.get("detail", body)
        except ValueError:
            detail = resp.text
        raise CliError(f"server returned {resp.status_code}: {detail}")
    return RESPONSES[path].model_validate(resp.json())


def run_local(args: argparse.Namespace, s: engine.Settings) -> BaseModel:
    cmd = args.command
    if cmd == "build":
        return engine.build_index(args.corpus_dir, args.index_dir, s)
    if cmd == "add":
        return engine.add_file(args.index_dir, args.file, s, args.doc_id)
    if cmd == "remove":
        return engine.remove_doc(args.index_dir, args.doc_id, s)
    if cmd == "query":
        return engine.query_index(args.index_dir, args.query, s)
    if cmd == "ask":
        return engine.ask_index(args.index_dir, args.query, s)
    if cmd == "stats":
        return engine.index_stats(args.index_dir, s)
    if cmd == "bench-split":
        return engine.bench_split(args.corpus_dir, s, args.per_document)
    raise CliError(f"unknown command {cmd}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        s = settings_from_args(args)
        if args.command == "serve":
            service.serve(s, args.host, args.port)
            return 0
        result = run_remote(args, s) if args.server else run_local(args, s)
    except Exception as exc:  # every failure becomes a diagnostic and a nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(result.model_dump(), indent=2, sort_keys=True))
    else:
        render(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
