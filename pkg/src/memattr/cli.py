"""Command-line entry point.

Subcommands: kb validate/stats, dataset stats, index build/query, retrieve,
attribute, eval. Exit codes: 0 success, 1 usage error, 2 data error,
3 model/transport error. Diagnostics go to stderr; data goes to stdout or
--out (written atomically). With --mock every model call stays in-process:
no network code path is constructed at all.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import ENDPOINT_ROLES, AppConfig, load_config
from .dataset import (
    HarmLabel,
    consistency_warnings,
    dataset_stats,
    load_dataset,
    record_from_json_line,
)
from .errors import (
    DataError,
    ModelError,
    ParseError,
    UsageError,
)
from .evaluate import (
    DecisionRecord,
    EvalConfig,
    evaluate_run,
    render_tables,
)
from .gateway import EndpointConfig, MockBackend, ModelBackend, RemoteBackend, load_scenarios
from .index import INDEX_VERSION, build_index, load_index, save_index, top_k
from .jsonl import atomic_write_text, dumps_record, read_records
from .kb import kb_stats, load_kb, scan_kb
from .pipeline import KnowledgePipeline
from .reasoning import (
    AttributionInput,
    Decision,
    MemeTuple,
    ParseStatus,
    attribute,
    generate_stance,
)
from .tokens import surfaces

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; this CLI reserves 2 for data errors.
    def error(self, message: str) -> None:
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="memattr", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version",
        action="version",
        version=f"memattr {__version__} (index format v{INDEX_VERSION})",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument(
        "--log-level", choices=["debug", "info", "warning", "error"], default=None
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mock", action="store_true", default=None,
                       help="use the deterministic offline backend")
        p.add_argument("--scenarios", dest="scenarios_path",
                       help="mock scenario fixture (JSONL)")
        p.add_argument("--endpoint-url", help="remote OpenAI-compatible base URL")
        p.add_argument("--model", help="remote model name")
        p.add_argument("--credential-env",
                       help="environment variable holding the API key")
        p.add_argument("--parallelism", type=int, default=None)

    kb = sub.add_parser("kb", help="lexicon file operations")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    kb_validate = kb_sub.add_parser("validate", help="report every problem in a lexicon file")
    kb_validate.add_argument("path")
    kb_validate.set_defaults(func=cmd_kb_validate)
    kb_stats_p = kb_sub.add_parser("stats", help="lexicon statistics")
    kb_stats_p.add_argument("path")
    kb_stats_p.add_argument("--out")
    kb_stats_p.set_defaults(func=cmd_kb_stats)

    ds = sub.add_parser("dataset", help="dataset file operations")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    ds_stats = ds_sub.add_parser("stats", help="dataset statistics")
    ds_stats.add_argument("path")
    ds_stats.add_argument("--out")
    ds_stats.add_argument("--figures", help="directory for rendered PNG figures")
    ds_stats.set_defaults(func=cmd_dataset_stats)

    index = sub.add_parser("index", help="retrieval index operations")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    index_build = index_sub.add_parser("build", help="build and save an index")
    index_build.add_argument("--kb", required=True, help="lexicon JSONL file")
    index_build.add_argument("--out", required=True, help="index output path")
    index_build.add_argument("--dim", dest="embed_dim", type=int, default=None)
    add_model_flags(index_build)
    index_build.set_defaults(func=cmd_index_build)
    index_query = index_sub.add_parser("query", help="query a saved index")
    index_query.add_argument("--index", required=True)
    index_query.add_argument("--text", required=True)
    index_query.add_argument("--k", type=int, default=5)
    index_query.add_argument("--w-bm25", dest="w_bm25", type=float, default=None)
    add_model_flags(index_query)
    index_query.set_defaults(func=cmd_index_query)

    retrieve = sub.add_parser("retrieve", help="gather gated knowledge for one meme")
    retrieve.add_argument("--index", required=True)
    retrieve.add_argument("--text", default="")
    retrieve.add_argument("--desc", default="")
    retrieve.add_argument("--tau", dest="tau_rel", type=float, default=None)
    retrieve.add_argument("--k", dest="k_final", type=int, default=None)
    retrieve.add_argument("--w-bm25", dest="w_bm25", type=float, default=None)
    add_model_flags(retrieve)
    retrieve.set_defaults(func=cmd_retrieve)

    attr = sub.add_parser("attribute", help="decide harmful/non-harmful per record")
    attr.add_argument("--index", required=True)
    attr.add_argument("--record", required=True,
                      help="dataset JSONL file, or one dataset JSON line")
    attr.add_argument("--generate-stances", action="store_true",
                      help="generate interpretations instead of using gold ones")
    attr.add_argument("--out")
    attr.add_argument("--language", choices=["auto", "zh", "en"], default=None)
    attr.add_argument("--tau", dest="tau_rel", type=float, default=None)
    attr.add_argument("--k", dest="k_final", type=int, default=None)
    attr.add_argument("--w-bm25", dest="w_bm25", type=float, default=None)
    add_model_flags(attr)
    attr.set_defaults(func=cmd_attribute)

    ev = sub.add_parser("eval", help="score predictions against gold records")
    ev.add_argument("--pred", required=True, help="decisions JSONL file")
    ev.add_argument("--gold", required=True, help="dataset JSONL file")
    ev.add_argument("--likert", action="store_true",
                    help="judge explanations on the five-dimension rubric")
    ev.add_argument("--out", help="report JSON output path")
    ev.add_argument("--figures", help="directory for rendered PNG figures")
    add_model_flags(ev)
    ev.set_defaults(func=cmd_eval)

    return parser


_OVERRIDE_KEYS = (
    "mock",
    "scenarios_path",
    "tau_rel",
    "k_final",
    "w_bm25",
    "embed_dim",
    "parallelism",
    "language",
    "log_level",
)


def _config_from_args(args: argparse.Namespace) -> AppConfig:
    overrides: dict[str, Any] = {
        key: getattr(args, key, None) for key in _OVERRIDE_KEYS
    }
    url = getattr(args, "endpoint_url", None)
    model = getattr(args, "model", None)
    if url or model:
        if not (url and model):
            raise UsageError("--endpoint-url and --model must be given together")
        overrides["endpoint"] = EndpointConfig(
            base_url=url,
            model=model,
            credential_env=getattr(args, "credential_env", None) or "",
        )
    return load_config(args.config, overrides)


def _mock_backend(config: AppConfig) -> MockBackend:
    scenarios = (
        load_scenarios(config.scenarios_path) if config.scenarios_path else []
    )
    return MockBackend(scenarios)


def _backends(config: AppConfig, roles: Sequence[str]) -> dict[str, ModelBackend]:
    """One backend per requested role; the mock serves every role at once."""
    if config.mock:
        mock = _mock_backend(config)
        return {role: mock for role in roles}
    backends: dict[str, ModelBackend] = {}
    for role in roles:
        endpoint = config.endpoints.get(role)
        if endpoint is None:
            raise UsageError(
                f"no endpoint configured for role {role!r}; pass --mock, "
                "--endpoint-url/--model, or a config file with endpoints"
            )
        backends[role] = RemoteBackend(endpoint)
    return backends


def _emit(text: str, out: str | None) -> None:
    """Data output: atomically to --out, else stdout."""
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_kb_validate(args: argparse.Namespace, config: AppConfig) -> int:
    kb, problems = scan_kb(args.path)
    lines = [*problems, f"{'INVALID' if problems else 'OK'}: "
             f"{len(kb)} valid entries, {len(problems)} problems"]
    _emit("".join(line + "\n" for line in lines), None)
    return 2 if problems else 0


def cmd_kb_stats(args: argparse.Namespace, config: AppConfig) -> int:
    stats = kb_stats(load_kb(args.path))
    _emit(dumps_record(stats.to_record()) + "\n", args.out)
    return 0


def cmd_dataset_stats(args: argparse.Namespace, config: AppConfig) -> int:
    records = load_dataset(args.path)
    stats = dataset_stats(records)
    for warning in consistency_warnings(stats):
        log.warning("%s", warning)
    _emit(dumps_record(stats.to_record()) + "\n", args.out)
    if args.figures:
        from .figures import save_dataset_figures

        for path in save_dataset_figures(stats, args.figures):
            log.info("wrote %s", path)
    return 0


def cmd_index_build(args: argparse.Namespace, config: AppConfig) -> int:
    kb = load_kb(args.kb)
    embedder = _backends(config, ["embedder"])["embedder"]
    bundle = build_index(kb, embedder.embed_texts, config.embed_dim)
    save_index(bundle, args.out)
    log.info(
        "indexed %d entries (dim %d) to %s", len(kb), config.embed_dim, args.out
    )
    return 0


def cmd_index_query(args: argparse.Namespace, config: AppConfig) -> int:
    bundle = load_index(args.index)
    embedder = _backends(config, ["embedder"])["embedder"]
    tokens = surfaces(args.text)
    (query_vec,) = embedder.embed_texts([args.text], bundle.dense.dim)
    hits = top_k(bundle.bm25, bundle.dense, tokens, query_vec, config.weights, args.k)
    out_lines = []
    for hit in hits:
        entry = bundle.kb.get(hit.doc_id)
        term = entry.term if entry else ""
        out_lines.append(
            f"{hit.doc_id}\t{term}\t{hit.s_hybrid:.6f}"
            f"\t{hit.s_bm25_norm:.6f}\t{hit.s_dense_norm:.6f}"
        )
    _emit("".join(line + "\n" for line in out_lines), None)
    return 0


def _pipeline(config: AppConfig, index_path: str) -> KnowledgePipeline:
    bundle = load_index(index_path)
    backends = _backends(config, ["expansion", "rerank", "embedder"])
    return KnowledgePipeline(
        bundle=bundle,
        chat_model=backends["expansion"],
        logit_model=backends["rerank"],
        embedder=backends["embedder"],
        weights=config.weights,
        gate_config=config.gate,
        parallelism=config.parallelism,
    )


def cmd_retrieve(args: argparse.Namespace, config: AppConfig) -> int:
    pipeline = _pipeline(config, args.index)
    context = pipeline.gather(args.text, args.desc)
    out_lines = [
        f"{f.entry.id}\t{f.entry.term}\t{f.p_rel:.6f}\t{f.s_hybrid:.6f}"
        for f in context.fragments
    ]
    _emit("".join(line + "\n" for line in out_lines), None)
    if context.is_empty():
        log.info("no knowledge fragment cleared the gate")
    return 0


def _is_existing_path(raw: str) -> bool:
    try:
        return Path(raw).exists()
    except OSError:  # e.g. ENAMETOOLONG probing an inline JSON record
        return False


def _load_attribution_records(raw: str) -> list:
    if _is_existing_path(raw):
        return load_dataset(raw)
    if raw.lstrip().startswith("{"):
        return [record_from_json_line(raw)]
    raise DataError(f"--record is neither an existing file nor a JSON object: {raw!r}")


def cmd_attribute(args: argparse.Namespace, config: AppConfig) -> int:
    records = _load_attribution_records(args.record)
    pipeline = _pipeline(config, args.index)
    backends = _backends(config, ["attribution"])
    attribution_model = backends["attribution"]
    echo = config.echo()
    out_lines: list[str] = []
    for record in records:
        context = pipeline.gather(record.text, record.description)
        meme = MemeTuple(
            text=record.text,
            description=record.description,
            image=record.image_ref or None,
        )
        if args.generate_stances:
            exp_nonharmful = generate_stance(
                meme, context, HarmLabel.NON_HARMFUL, attribution_model,
                char_budget=config.stance_budget, language=config.language,
            )
            exp_harmful = generate_stance(
                meme, context, HarmLabel.HARMFUL, attribution_model,
                char_budget=config.stance_budget, language=config.language,
            )
        else:
            exp_nonharmful = record.exp_nonharmful
            exp_harmful = record.exp_harmful
        decision = attribute(
            AttributionInput(
                meme=meme,
                exp_nonharmful=exp_nonharmful,
                exp_harmful=exp_harmful,
                knowledge=context,
            ),
            attribution_model,
            language=config.language,
        )
        out_lines.append(
            dumps_record(
                {
                    "id": record.id,
                    "label": decision.label.value,
                    "reason": decision.reason,
                    "parse_status": decision.parse_status.value,
                    "p_rels": [round(f.p_rel, 10) for f in context.fragments],
                    "config": echo,
                }
            )
        )
    _emit("".join(line + "\n" for line in out_lines), args.out)
    return 0


def _read_predictions(path: str) -> list[DecisionRecord]:
    predictions: list[DecisionRecord] = []
    for lineno, record in read_records(path):
        if "id" not in record or "label" not in record:
            raise ParseError("prediction needs 'id' and 'label' fields", line=lineno)
        try:
            label = HarmLabel(record["label"])
        except ValueError:
            raise ParseError(
                f"label: {record['label']!r} is not one of "
                f"{', '.join(l.value for l in HarmLabel)}",
                line=lineno,
            ) from None
        try:
            status = ParseStatus(record.get("parse_status", "clean"))
        except ValueError:
            raise ParseError(
                f"parse_status: {record['parse_status']!r} is invalid", line=lineno
            ) from None
        reason = record.get("reason", "")
        decision = Decision(
            label=label, reason=reason, raw_response=reason, parse_status=status
        )
        predictions.append(
            DecisionRecord(
                id=str(record["id"]),
                decision=decision,
                p_rels=tuple(record.get("p_rels", ())),
            )
        )
    return predictions


def cmd_eval(args: argparse.Namespace, config: AppConfig) -> int:
    predictions = _read_predictions(args.pred)
    gold = load_dataset(args.gold)
    judge = None
    judge_name = ""
    if args.likert:
        judge = _backends(config, ["judge"])["judge"]
        if config.mock:
            judge_name = "mock"
        else:
            judge_name = config.endpoints["judge"].model
    report = evaluate_run(
        predictions,
        gold,
        EvalConfig(
            judge=judge,
            judge_name=judge_name,
            likert=args.likert,
            config_echo=config.echo(),
        ),
    )
    _emit(json.dumps(report.to_record(), ensure_ascii=False, sort_keys=True,
                     indent=2) + "\n", args.out)
    if args.out:
        sys.stdout.write(render_tables(report))
    if args.figures:
        from .figures import save_report_figures

        for path in save_report_figures(report, args.figures):
            log.info("wrote %s", path)
    return 0


def run(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(list(argv))
        except SystemExit as exc:  # --help / --version
            return 0 if exc.code in (0, None) else 1
        config = _config_from_args(args)
        logging.basicConfig(
            stream=sys.stderr,
            level=getattr(logging, config.log_level.upper(), logging.WARNING),
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
