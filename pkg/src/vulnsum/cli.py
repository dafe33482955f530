"""Single command-line entry point for every pipeline stage.

Exit codes: 0 success, 1 completed with partial failures (some records
skipped), 2 fatal error (bad flags, schema violation, precondition).
Offline/fixture mode is the default; live harvesting needs --live and an
API key in the environment.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import corpusbuild, evalsuite, harvest, semgate, summarize

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2

# Frozen seeds for the offline deterministic encoder pair.
_DET_SEEDS = {"use": 11, "mpnet": 23}

_GATE_MODES = {
    "use": semgate.GateMode.SINGLE_USE,
    "mpnet": semgate.GateMode.SINGLE_MPNET,
    "dual": semgate.GateMode.DUAL,
}


class CliError(Exception):
    """Fatal command-line level error (exit 2)."""


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list[str]
    outputs: list[str]
    seed: int | None
    started: str
    finished: str = ""
    counts: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        """Atomic write: the manifest appears complete or not at all."""
        self.finished = _now()
        path.parent.mkdir(parents=True, exist_ok=True)
        body = json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(body)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise CliError(f"config {path} must be a JSON object")
    return obj


def _opt(args, config: dict, key: str, default):
    """CLI flag wins, then config file, then the default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _parse_date(value: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError as exc:
        raise CliError(f"bad date {value!r} (expected YYYY-MM-DD)") from exc


def _transport(args, config):
    offline = not _opt(args, config, "live", False)
    fixture_dir = _opt(args, config, "fixture_dir", None)
    if offline:
        if not fixture_dir:
            raise CliError("offline mode needs --fixture-dir (or --live)")
        try:
            return harvest.FixtureTransport(fixture_dir)
        except harvest.HarvestError as exc:
            raise CliError(str(exc)) from exc
    api_key_env = _opt(args, config, "api_key_env", "NVD_API_KEY")
    return harvest.LiveTransport(api_key=os.environ.get(api_key_env))


def _harvest_config(args, config, date_start=None, date_end=None):
    epoch = dt.date(1970, 1, 1)
    return harvest.HarvestConfig(
        date_start=date_start or epoch,
        date_end=date_end or date_start or epoch,
        paragraph_limit=int(_opt(args, config, "paragraph_limit", 100)),
        request_timeout=float(_opt(args, config, "request_timeout", 30.0)),
        max_parallel_fetches=int(_opt(args, config, "max_parallel_fetches", 8)),
        rate_limit=float(_opt(args, config, "rate_limit", 0.5)),
        retries=int(_opt(args, config, "retries", 3)),
        retry_backoff=float(_opt(args, config, "retry_backoff", 0.5)),
        results_per_page=int(_opt(args, config, "results_per_page", 2000)),
    )


def _band(value) -> semgate.EncoderBand:
    if isinstance(value, semgate.EncoderBand):
        return value
    try:
        lower, upper = value
        return semgate.EncoderBand(float(lower), float(upper))
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad band {value!r} (expected [lower, upper])") from exc


def _gate_config(args, config) -> semgate.GateConfig:
    mode_name = _opt(args, config, "gate", "dual")
    if mode_name not in _GATE_MODES:
        raise CliError(f"unknown gate mode {mode_name!r}")
    try:
        return semgate.GateConfig(
            mode=_GATE_MODES[mode_name],
            use_band=_band(config.get("use_band", (0.60, 0.90))),
            mpnet_band=_band(config.get("mpnet_band", (0.70, 0.90))),
            dual_use_lower=float(config.get("dual_use_lower", 0.50)),
            agreement_delta=float(config.get("agreement_delta", 0.20)),
            upper_cap=float(config.get("upper_cap", 0.90)),
        )
    except ValueError as exc:
        raise CliError(f"bad gate config: {exc}") from exc


def _providers(args, config) -> dict[str, semgate.EmbeddingProvider]:
    kind = _opt(args, config, "provider", "det")
    if kind == "det":
        return {
            name: semgate.DeterministicProvider(name, seed)
            for name, seed in _DET_SEEDS.items()
        }
    if kind == "remote":
        url = _opt(args, config, "backend_url", None)
        if not url:
            raise CliError("remote provider needs --backend-url")
        return {
            name: semgate.RemoteProvider(url, name) for name in ("use", "mpnet")
        }
    raise CliError(f"unknown provider {kind!r}")


def _decode_params(args, config) -> summarize.DecodeParams:
    decode_cfg = config.get("decode", {})
    try:
        return summarize.DecodeParams(
            max_input_tokens=int(
                _opt(args, decode_cfg, "max_input_tokens", 500)
            ),
            max_summary_tokens=int(
                _opt(args, decode_cfg, "max_summary_tokens", 250)
            ),
            num_beams=int(_opt(args, decode_cfg, "num_beams", 2)),
            length_penalty=float(_opt(args, decode_cfg, "length_penalty", 8.0)),
            repetition_penalty=float(
                _opt(args, decode_cfg, "repetition_penalty", 2.0)
            ),
        )
    except ValueError as exc:
        raise CliError(f"bad decode params: {exc}") from exc


def _manifest(args, config, seed=None) -> RunManifest:
    return RunManifest(
        command=args.command,
        config=dict(config),
        inputs=[],
        outputs=[],
        seed=seed,
        started=_now(),
    )


# ---------------------------------------------------------------------------
# Commands

def cmd_collect(args, config) -> int:
    cfg = _harvest_config(
        args, config, _parse_date(args.start), _parse_date(args.end)
    )
    transport = _transport(args, config)
    out = Path(args.out)
    manifest = _manifest(args, config)
    manifest.inputs = [args.fixture_dir] if args.fixture_dir else ["live API"]
    counters: dict = {}
    try:
        records = harvest.list_cves(
            cfg,
            transport,
            api_base=_opt(args, config, "api_url", harvest.DEFAULT_API_BASE),
            checkpoint_path=out.with_suffix(out.suffix + ".partial"),
            counters=counters,
        )
    except harvest.HarvestAborted as exc:
        print(f"collect aborted: {exc}", file=sys.stderr)
        if exc.checkpoint:
            print(f"partial progress: {exc.checkpoint}", file=sys.stderr)
        return EXIT_FATAL
    harvest.write_records(records, out)
    manifest.outputs = [str(out)]
    skipped = counters.get("skipped_records", 0)
    manifest.counts = {
        "records_in": len(records) + skipped,
        "records_out": len(records),
        "failures": skipped,
    }
    manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
    print(f"collected {len(records)} records -> {out}")
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_scrape(args, config) -> int:
    records = harvest.read_records(args.input)
    cfg = _harvest_config(args, config)
    transport = _transport(args, config)
    docs_by_cve = harvest.scrape_references(records, cfg, transport)
    out = Path(args.out)
    harvest.write_reference_docs(docs_by_cve, out)
    status_counts: dict[str, int] = {}
    for docs in docs_by_cve.values():
        for doc in docs:
            key = doc.fetch_status.value
            status_counts[key] = status_counts.get(key, 0) + 1
    manifest = _manifest(args, config)
    manifest.inputs = [args.input]
    manifest.outputs = [str(out)]
    # non-ok fetches are recorded outcomes, not skipped records: the status
    # lands in the output and downstream stages exclude those pages
    manifest.counts = {
        "records_in": len(records),
        "records_out": len(docs_by_cve),
        "failures": 0,
        "fetch_status": status_counts,
    }
    manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
    print(f"scraped references for {len(docs_by_cve)} records -> {out}")
    return EXIT_OK


def cmd_build(args, config) -> int:
    records = harvest.read_records(args.input)
    docs_by_cve = harvest.read_reference_docs(args.refs)
    gate_cfg = _gate_config(args, config)
    providers = _providers(args, config)
    counters: dict = {}
    samples = corpusbuild.build_corpus(
        records,
        docs_by_cve,
        gate_cfg,
        providers,
        input_cap=int(_opt(args, config, "input_cap", corpusbuild.DEFAULT_INPUT_CAP)),
        summary_cap=int(
            _opt(args, config, "summary_cap", corpusbuild.DEFAULT_SUMMARY_CAP)
        ),
        include_description=bool(config.get("include_description", True)),
        dedup_paragraphs=bool(config.get("dedup_paragraphs", False)),
        counters=counters,
    )
    out = Path(args.out)
    corpusbuild.write_samples(samples, out)
    skipped = counters.get("docs_skipped", 0)
    manifest = _manifest(args, config)
    manifest.inputs = [args.input, args.refs]
    manifest.outputs = [str(out)]
    manifest.counts = {
        "records_in": len(records),
        "records_out": len(samples),
        "failures": skipped,
    }
    manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
    print(f"built {len(samples)} samples from {len(records)} records -> {out}")
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_stats(args, config) -> int:
    samples = corpusbuild.read_samples(args.corpus)
    try:
        stats = corpusbuild.corpus_stats(samples, top_k=args.top_k)
    except corpusbuild.EmptyCorpusError as exc:
        raise CliError(str(exc)) from exc
    sys.stdout.write(corpusbuild.render_stats(stats))
    if args.json_out:
        out = Path(args.json_out)
        body = json.dumps(corpusbuild.stats_to_json(stats), sort_keys=True)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(body + "\n", encoding="utf-8")
        manifest = _manifest(args, config)
        manifest.inputs = [args.corpus]
        manifest.outputs = [str(out)]
        manifest.counts = {
            "records_in": len(samples),
            "records_out": len(samples),
            "failures": 0,
        }
        manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
        print(f"stats JSON -> {out}")
    return EXIT_OK


def cmd_split(args, config) -> int:
    samples = corpusbuild.read_samples(args.corpus)
    seed = int(_opt(args, config, "seed", 1337))
    try:
        split = corpusbuild.split_corpus(samples, seed)
    except corpusbuild.SplitError as exc:
        raise CliError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    corpusbuild.write_corpus(split, out_dir)
    manifest = _manifest(args, config, seed=seed)
    manifest.inputs = [args.corpus]
    manifest.outputs = [str(out_dir / name) for name in corpusbuild.SPLIT_FILES]
    manifest.counts = {
        "records_in": len(samples),
        "records_out": len(samples),
        "failures": 0,
        "sizes": {
            "train": len(split.train),
            "validation": len(split.validation),
            "test": len(split.test),
        },
    }
    manifest.write(out_dir / "manifest.json")
    print(
        f"split {len(samples)} samples into "
        f"{len(split.train)}/{len(split.validation)}/{len(split.test)} -> {out_dir}"
    )
    return EXIT_OK


def cmd_summarize(args, config) -> int:
    samples = corpusbuild.read_samples(args.input)
    params = _decode_params(args, config)
    engine = _opt(args, config, "engine", "baseline")
    backend = None
    if engine == "remote":
        url = _opt(args, config, "backend_url", None)
        if not url:
            raise CliError("remote engine needs --backend-url")
        backend = summarize.SummaryBackend(url)
    try:
        batch = summarize.batch_summarize(
            samples,
            engine,
            params,
            backend=backend,
            k_sentences=int(_opt(args, config, "lead_k", 3)),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    summarize.write_results(batch.results, out)
    manifest = _manifest(args, config)
    manifest.inputs = [args.input]
    manifest.outputs = [str(out)]
    manifest.counts = {
        "records_in": len(samples),
        "records_out": len(batch.results),
        "failures": len(batch.failures),
    }
    manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
    print(f"summarized {len(batch.results)} samples -> {out}")
    for failure in batch.failures:
        print(f"  failed: {failure.cve_id}: {failure.error}", file=sys.stderr)
    return EXIT_PARTIAL if batch.failures else EXIT_OK


def _load_targets(path: str) -> tuple[dict[str, str], dict[str, str]]:
    samples = corpusbuild.read_samples(path)
    targets = {s.cve_id: s.target_summary for s in samples}
    inputs = {s.cve_id: s.input_text for s in samples}
    return targets, inputs


def cmd_eval(args, config) -> int:
    results = summarize.read_results(args.results)
    targets, _ = _load_targets(args.targets)
    try:
        aggregate = evalsuite.corpus_rouge(results, targets)
    except evalsuite.EvalError as exc:
        raise CliError(str(exc)) from exc
    backend_ids = sorted({r.backend_id for r in results})
    model = backend_ids[0] if len(backend_ids) == 1 else "mixed"
    params = results[0].params
    meta = {"T": params.max_input_tokens, "b": params.num_beams, "B": "-"}
    sys.stdout.write(evalsuite.render_rouge_table([(model, aggregate, meta)]))

    report: dict = {
        "n": len(results),
        "model": model,
        "rouge1": {
            "recall": aggregate.recall,
            "precision": aggregate.precision,
            "f1": aggregate.f1,
        },
        "similarity": None,
    }
    if args.provider:
        providers = _providers(args, config)
        sim = evalsuite.similarity_report(
            results, targets, providers[args.encoder]
        )
        sys.stdout.write(evalsuite.render_similarity(sim))
        report["similarity"] = {
            "provider": sim.provider_id,
            "mean": sim.mean,
            "histogram": list(sim.histogram),
            "scores": list(sim.scores),
        }
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(
            json.dumps(report, sort_keys=True) + "\n", encoding="utf-8"
        )
        manifest = _manifest(args, config)
        manifest.inputs = [args.results, args.targets]
        manifest.outputs = [str(out)]
        manifest.counts = {
            "records_in": len(results),
            "records_out": len(results),
            "failures": 0,
        }
        manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
        print(f"evaluation report -> {out}")
    return EXIT_OK


def cmd_human_eval(args, config) -> int:
    results = summarize.read_results(args.results)
    targets, inputs = _load_targets(args.targets)
    seed = int(_opt(args, config, "seed", 1337))
    items = evalsuite.select_eval_items(
        results, targets, inputs, n=args.n, seed=seed
    )
    if not items:
        raise CliError("no gradable samples (no results match targets)")
    graded = evalsuite.human_eval_session(items, args.annotator, args.log)
    records = evalsuite.read_eval_log(args.log)
    if records:
        means = evalsuite.human_eval_aggregate(records)
        sys.stdout.write(evalsuite.render_human_eval({args.annotator: means}))
    print(f"{len(records)} graded records in {args.log} (seed {seed})")
    manifest = _manifest(args, config, seed=seed)
    manifest.inputs = [args.results, args.targets]
    manifest.outputs = [str(args.log)]
    manifest.counts = {
        "records_in": len(items),
        "records_out": len(graded),
        "failures": 0,
    }
    manifest.write(Path(args.log).with_suffix(".manifest.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vulnsum",
        description="Enrich CVE descriptions from reference pages and "
        "evaluate generated summaries.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="seed for randomized stages")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--live",
        dest="live",
        action="store_true",
        default=None,
        help="fetch from the live web (needs an API key for collect)",
    )
    mode.add_argument(
        "--offline",
        dest="live",
        action="store_false",
        default=None,
        help="replay archived fixtures (the default; needs --fixture-dir)",
    )
    parser.add_argument("--fixture-dir", dest="fixture_dir",
                        help="archived-fixture directory for offline runs")
    parser.add_argument("--api-key-env", dest="api_key_env",
                        help="environment variable holding the database API key")
    parser.add_argument("--backend-url", dest="backend_url",
                        help="base URL of the model backend")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="harvest CVE records to JSONL")
    p.add_argument("--start", required=True, help="first publication date")
    p.add_argument("--end", required=True, help="last publication date")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("scrape", help="fetch reference pages and paragraphs")
    p.add_argument("--in", dest="input", required=True, help="records JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--paragraph-limit", dest="paragraph_limit", type=int)
    p.add_argument("--timeout", dest="request_timeout", type=float)
    p.add_argument("--max-parallel", dest="max_parallel_fetches", type=int)
    p.set_defaults(func=cmd_scrape)

    p = sub.add_parser("build", help="gate paragraphs and build the corpus")
    p.add_argument("--in", dest="input", required=True, help="records JSONL")
    p.add_argument("--refs", required=True, help="reference-docs JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--gate", choices=sorted(_GATE_MODES))
    p.add_argument("--provider", choices=["det", "remote"])
    p.add_argument("--input-cap", dest="input_cap", type=int)
    p.add_argument("--summary-cap", dest="summary_cap", type=int)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="corpus statistics report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--top-k", dest="top_k", type=int, default=15)
    p.add_argument("--json", dest="json_out", help="also write JSON stats")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="train/validation/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("summarize", help="generate summaries for a split")
    p.add_argument("--in", dest="input", required=True, help="samples JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--engine", choices=["baseline", "remote"])
    p.add_argument("--lead-k", dest="lead_k", type=int)
    p.add_argument("--max-input-tokens", dest="max_input_tokens", type=int)
    p.add_argument("--max-summary-tokens", dest="max_summary_tokens", type=int)
    p.add_argument("--num-beams", dest="num_beams", type=int)
    p.add_argument("--length-penalty", dest="length_penalty", type=float)
    p.add_argument("--repetition-penalty", dest="repetition_penalty", type=float)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("eval", help="ROUGE-1 and similarity reports")
    p.add_argument("--results", required=True, help="summary results JSONL")
    p.add_argument("--targets", required=True, help="samples JSONL with targets")
    p.add_argument("--provider", choices=["det", "remote"])
    p.add_argument("--encoder", choices=["use", "mpnet"], default="use")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("human-eval", help="interactive grading session")
    p.add_argument("--results", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--log", required=True, help="append-only grades JSONL")
    p.add_argument("--annotator", required=True)
    p.set_defaults(func=cmd_human_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (
        harvest.RecordFormatError,
        corpusbuild.CorpusFormatError,
        summarize.SummarizeError,
        evalsuite.EvalError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
