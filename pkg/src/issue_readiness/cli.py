"""Command-line interface: fetch, score, agreement, compare, train-eval, explain, assess."""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .consensus import ConsensusScores, agreement_report, load_consensus, save_consensus, vote
from .corpus import (
    CorpusRecord,
    Outcome,
    PullRequestRecord,
    format_timestamp,
    issue_from_dict,
    load_corpus,
    load_history,
    record_from_dict,
    record_key,
    save_corpus,
    save_history,
    select_eligible,
    truncate_comments,
)
from .errors import InputError, IssueReadinessError
from .evaluation import (
    DEFAULT_POSITIVE_CRITERIA,
    EmptyStratum,
    PerformanceTable,
    bootstrap_evaluate,
    compare_all,
    comparison_markdown,
    conjunction_comparison,
    label_consensus,
    performance_markdown,
    performance_table,
)
from .features import (
    CORRELATION_THRESHOLD,
    REDUNDANCY_R2,
    Dataset,
    assemble_dataset,
    context_features,
    correlation_filter,
    feature_vector,
    redundancy_check,
)
from .github import GitHubClient, fetch_many
from .interpretation import (
    PDCurve,
    effect_markdown,
    effect_table,
    improvement_guidance,
    partial_dependence,
    partial_dependence_2d,
    rank_features,
)
from .models import ModelConfig, ModelKind, load_model, predict_proba, save_model, train
from .rubric import CRITERION_KEYS, get_criterion
from .scorer import HttpChatProvider, LlmConfig, ScoreCache, load_runsets, save_runsets, score_many, score_runs
from .stats import ScottKnottRanking

log = logging.getLogger("issue_readiness")

EXIT_OK = 0
EXIT_ANALYSIS = 1
EXIT_INPUT = 2

DEFAULT_CONFIG: dict[str, Any] = {
    "github": {"base_url": "https://api.github.com", "workers": 4, "history": True, "agent_logins": None},
    "llm": {
        "base_url": "https://api.openai.com/v1",
        "model_name": "gpt-5",
        "reasoning_effort": "high",
        "max_retries": 2,
        "timeout": 300.0,
        "runs": 3,
        "workers": 4,
    },
    "analysis": {
        "metric": "ordinal",
        "iterations": 100,
        "min_rows": 30,
        "min_train_rows": 10,
        "correlation_threshold": CORRELATION_THRESHOLD,
        "redundancy_r2": REDUNDANCY_R2,
        "positive_criteria": list(DEFAULT_POSITIVE_CRITERIA),
        "kinds": [k.value for k in ModelKind],
        "explain_kind": ModelKind.RandomForest.value,
        "surfaces": [],
    },
    "models": {k.value: {} for k in ModelKind},
}


# --------------------------------------------------------------------------
# configuration and manifests

def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise InputError(f"unknown config key {where}{k}")
        if isinstance(out[k], dict) and k != "models":
            if not isinstance(v, dict):
                raise InputError(f"config key {where}{k} must be a table")
            out[k] = _merge(out[k], v, f"{where}{k}.")
        elif k == "models":
            for kind, params in v.items():
                if kind not in out[k]:
                    raise InputError(f"unknown model kind in config: models.{kind}")
                out[k][kind] = dict(params)
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return _merge(DEFAULT_CONFIG, data)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _now() -> str:
    return format_timestamp(datetime.now(timezone.utc))


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    started_at: str
    finished_at: str | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    notes: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tool_version": __version__, **self.__dict__}


@dataclass
class Context:
    args: argparse.Namespace
    config: dict
    out: Path
    manifest: RunManifest

    @property
    def seed(self) -> int:
        return self.manifest.seed

    def input(self, name: str, path: str | Path | None, default: str | None = None) -> Path:
        p = Path(path) if path else (self.out / default if default else None)
        if p is None:
            raise InputError(f"--{name} is required")
        if not p.is_file():
            raise InputError(f"missing input file for --{name}: {p}")
        self.manifest.inputs[name] = str(p)
        return p

    def output(self, filename: str) -> Path:
        p = self.out / filename
        self.manifest.outputs[filename] = str(p)
        return p

    def write_json(self, filename: str, data: Any) -> Path:
        p = self.output(filename)
        p.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return p

    def write_text(self, filename: str, text: str) -> Path:
        p = self.output(filename)
        p.write_text(text, encoding="utf-8")
        return p

    def write_report(self, stem: str, data: dict, render: Callable[[dict], str]) -> None:
        """JSON always; Markdown rendered from that same JSON when requested."""
        self.write_json(f"{stem}.json", data)
        if self.args.format == "md":
            self.write_text(f"{stem}.md", render(json.loads(json.dumps(data))))

    def write_failures(self, filename: str, failures: list[dict]) -> None:
        if failures:
            p = self.output(filename)
            with open(p, "w", encoding="utf-8") as fh:
                for f in failures:
                    fh.write(json.dumps(f, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# shared loaders

def _llm_config(cfg: dict) -> LlmConfig:
    llm = cfg["llm"]
    return LlmConfig(base_url=llm["base_url"], model_name=llm["model_name"],
                     reasoning_effort=llm["reasoning_effort"], max_retries=int(llm["max_retries"]),
                     timeout=float(llm["timeout"]))


def _read_triples(path: Path) -> list[tuple[str, int, int]]:
    triples = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row]
            if not row or not row[0] or row[0].startswith("#") or row[0] == "repo":
                continue
            if len(row) != 3:
                raise InputError(f"{path}:{lineno}: expected 'owner/name,issue,pr'")
            try:
                triples.append((row[0], int(row[1]), int(row[2])))
            except ValueError:
                raise InputError(f"{path}:{lineno}: issue and pr must be integers") from None
    return triples


def _load_histories(ctx: Context) -> dict[str, list[PullRequestRecord]] | None:
    path = Path(ctx.args.history) if ctx.args.history else ctx.out / "history.jsonl"
    if not path.is_file():
        if ctx.args.history:
            raise InputError(f"missing input file for --history: {path}")
        return None
    ctx.manifest.inputs["history"] = str(path)
    out: dict[str, list[PullRequestRecord]] = {}
    for pr in load_history(path):
        out.setdefault(pr.repo, []).append(pr)
    return out


def _labeled_inputs(ctx: Context) -> tuple[list[ConsensusScores], list[CorpusRecord]]:
    consensus = load_consensus(ctx.input("consensus", ctx.args.consensus, "consensus.jsonl"))
    records = load_corpus(ctx.input("corpus", ctx.args.corpus, "corpus.jsonl"))
    scored = {tuple(c.record_id) for c in consensus}
    eligible = [r for r in select_eligible(records) if r.record_id in scored]
    skipped = len(select_eligible(records)) - len(eligible)
    if skipped:
        log.warning("%d eligible corpus records have no consensus scores and are left out", skipped)
        ctx.manifest.notes["records_without_consensus"] = skipped
    return consensus, eligible


def _dataset(ctx: Context) -> Dataset:
    consensus, records = _labeled_inputs(ctx)
    return assemble_dataset(consensus, records, _load_histories(ctx))


def _kind(value: str) -> ModelKind:
    try:
        return ModelKind(value)
    except ValueError:
        raise InputError(f"unknown model kind {value!r}; choose from {[k.value for k in ModelKind]}") from None


def _hyper(cfg: dict) -> dict[ModelKind, dict]:
    return {ModelKind(k): dict(v) for k, v in cfg["models"].items()}


# --------------------------------------------------------------------------
# commands

def cmd_fetch(ctx: Context) -> int:
    triples = _read_triples(ctx.input("input", ctx.args.input))
    gh = ctx.config["github"]
    kwargs = {"base_url": gh["base_url"]}
    if gh["agent_logins"]:
        kwargs["agent_logins"] = gh["agent_logins"]
    with GitHubClient(**kwargs) as client:
        results = fetch_many(client, triples, workers=int(gh["workers"]))
        records, failures, ineligible = [], [], 0
        for triple, res in zip(triples, results):
            if isinstance(res, Exception):
                failures.append({"repo": triple[0], "issue_number": triple[1], "pr_number": triple[2],
                                 "error": type(res).__name__, "message": str(res)})
                continue
            rec = truncate_comments(res)
            if select_eligible([rec]):
                records.append(rec)
            else:
                ineligible += 1
        histories = []
        if gh["history"]:
            for repo in sorted({r.issue.repo for r in records}):
                try:
                    histories.extend(client.fetch_history(repo))
                except IssueReadinessError as exc:
                    failures.append({"repo": repo, "error": type(exc).__name__, "message": f"history: {exc}"})
    save_corpus(ctx.output("corpus.jsonl"), records)
    if gh["history"]:
        save_history(ctx.output("history.jsonl"), histories)
    ctx.write_failures("fetch_failures.jsonl", failures)
    ctx.manifest.notes.update({"requested": len(triples), "written": len(records), "ineligible": ineligible,
                               "failed": len(failures)})
    if triples and not records and len(failures) >= len(triples):
        log.error("every record failed to fetch")
        return EXIT_ANALYSIS
    return EXIT_OK


def cmd_score(ctx: Context) -> int:
    records = load_corpus(ctx.input("corpus", ctx.args.corpus, "corpus.jsonl"))
    llm = _llm_config(ctx.config)
    n = int(ctx.args.runs or ctx.config["llm"]["runs"])
    cache_path = Path(ctx.args.cache) if ctx.args.cache else ctx.out / "score_cache.jsonl"
    ctx.manifest.outputs["cache"] = str(cache_path)
    cache = ScoreCache(cache_path)
    provider = HttpChatProvider(timeout=llm.timeout)
    try:
        items = [(r.issue, r.record_id) for r in records]
        results = score_many(items, llm, n=n, cache=cache, provider=provider,
                             workers=int(ctx.config["llm"]["workers"]))
    finally:
        provider.close()
    runsets, failures = [], []
    for (issue, rid), res in zip(items, results):
        if isinstance(res, Exception):
            failures.append({"record": record_key(rid), "error": type(res).__name__, "message": str(res)})
        else:
            runsets.append(res)
    save_runsets(ctx.output("runs.jsonl"), runsets)
    save_consensus(ctx.output("consensus.jsonl"), [vote(rs) for rs in runsets])
    ctx.write_failures("score_failures.jsonl", failures)
    ctx.manifest.notes.update({"runs_per_issue": n, "scored": len(runsets), "failed": len(failures)})
    if records and not runsets:
        log.error("every issue failed to score")
        return EXIT_ANALYSIS
    return EXIT_OK


def _agreement_md(d: dict) -> str:
    lines = [f"Krippendorff's alpha ({d['metric']}) per criterion.", "",
             "| Criterion | Alpha | Band | Units | Disagreeing | Single dissenter | Median gap | Mean gap | Q3 gap |",
             "|---|---:|---|---:|---:|---:|---:|---:|---:|"]
    fmt = lambda v: "n/a" if v is None else f"{v:.3f}"  # noqa: E731
    for key, a in d["per_criterion"].items():
        dis = d["disagreement"][key]
        lines.append(f"| {key} | {fmt(a['alpha'])} | {a['band']} | {a['n_units']} | {dis['n_disagreeing']} | "
                     f"{fmt(dis['single_dissenter_fraction'])} | {fmt(dis['magnitude_median'])} | "
                     f"{fmt(dis['magnitude_mean'])} | {fmt(dis['magnitude_q3'])} |")
    counts = ", ".join(f"{b}: {n}" for b, n in d["band_counts"].items())
    return "\n".join(lines + ["", f"Bands: {counts}."]) + "\n"


def cmd_agreement(ctx: Context) -> int:
    runsets = load_runsets(ctx.input("runs", ctx.args.runs_file, "runs.jsonl"))
    report = agreement_report(runsets, ctx.args.metric or ctx.config["analysis"]["metric"])
    ctx.write_report("agreement", report.to_dict(), _agreement_md)
    return EXIT_OK


def cmd_compare(ctx: Context) -> int:
    consensus, records = _labeled_inputs(ctx)
    labels = {r.record_id: r.pr.outcome is Outcome.merged for r in records}
    items = label_consensus(consensus, labels)
    rows = {k: (v.to_dict() if v else None) for k, v in compare_all(items).items()}
    keys = ctx.args.conjunction.split(",") if ctx.args.conjunction else ctx.config["analysis"]["positive_criteria"]
    unknown = [k for k in keys if k not in CRITERION_KEYS]
    if unknown:
        raise InputError(f"unknown criteria in conjunction set: {unknown}")
    try:
        conj = conjunction_comparison(items, keys) if keys else None
    except EmptyStratum as exc:
        log.warning("conjunction not computed: %s", exc)
        conj = None
    data = {"n_issues": len(items), "criteria": rows, "conjunction": conj}
    ctx.write_report("compare", data, lambda d: comparison_markdown(d["criteria"], d["conjunction"]))
    return EXIT_OK


def _filtered(ctx: Context, ds: Dataset) -> tuple[Dataset, dict]:
    an = ctx.config["analysis"]
    filtered, report = correlation_filter(ds, float(an["correlation_threshold"]))
    redundant = redundancy_check(filtered, float(an["redundancy_r2"]))
    if redundant:
        log.warning("features still redundant after correlation filtering: %s", ", ".join(redundant))
    return filtered, {"correlation": report.to_dict(), "redundant": redundant}


def cmd_train_eval(ctx: Context) -> int:
    an = ctx.config["analysis"]
    ds = _dataset(ctx)
    ds.to_csv(ctx.output("dataset.csv"))
    filtered, filtering = _filtered(ctx, ds)
    kinds = [_kind(k) for k in an["kinds"]]
    table = performance_table(filtered, ds, kinds, seed=ctx.seed, iterations=int(an["iterations"]),
                              hyperparameters=_hyper(ctx.config), min_rows=int(an["min_rows"]),
                              min_train_rows=int(an["min_train_rows"]))
    data = {"n_rows": len(ds), "n_merged": int(ds.y.sum()), "iterations": int(an["iterations"]),
            "seed": ctx.seed, "filtering": filtering, **table.to_dict()}
    ctx.write_report("train_eval", data, lambda d: performance_markdown(PerformanceTable.from_dict(d)))
    return EXIT_OK


def _explain_md(d: dict) -> str:
    text = effect_markdown(d["table"])
    if d["surfaces"]:
        text += "\nTwo-feature surfaces: " + "; ".join(" x ".join(s["features"]) for s in d["surfaces"]) + \
                " (values in explain.json).\n"
    return text


def cmd_explain(ctx: Context) -> int:
    an = ctx.config["analysis"]
    ds = _dataset(ctx)
    filtered, filtering = _filtered(ctx, ds)
    kind = _kind(an["explain_kind"])
    cfg = ModelConfig(kind, ctx.seed, _hyper(ctx.config)[kind])
    br = bootstrap_evaluate(filtered, cfg, int(an["iterations"]), ctx.seed, int(an["min_rows"]),
                            int(an["min_train_rows"]))
    ranking = rank_features(br)
    model = train(filtered, cfg, min_rows=int(an["min_train_rows"]))
    save_model(model, ctx.output("model.json"))
    curves = [partial_dependence(model, filtered, f) for f in filtered.feature_names]
    pairs = [p.split(",") for p in (ctx.args.surface or [])] or [list(p) for p in an["surfaces"]]
    surfaces = [partial_dependence_2d(model, filtered, a.strip(), b.strip()).to_dict() for a, b in pairs]
    data = {
        "model_kind": kind.value,
        "seed": ctx.seed,
        "filtering": filtering,
        "medians": br.medians,
        "ranking": ranking.to_dict(),
        "curves": [c.to_dict() for c in curves],
        "table": effect_table(curves, ranking),
        "surfaces": surfaces,
    }
    ctx.write_report("explain", data, _explain_md)
    return EXIT_OK


def _parse_ref(ref: str) -> tuple[str, int]:
    repo, sep, num = ref.partition("#")
    if not sep or not num.isdigit():
        raise InputError(f"issue reference must look like owner/name#123, got {ref!r}")
    return repo, int(num)


def _assess_md(d: dict) -> str:
    lines = [f"# Readiness report for {d['issue']}", "",
             f"Estimated probability that an agent pull request for this issue is merged: "
             f"**{100 * d['probability']:.1f}%**", ""]
    for w in d["warnings"]:
        lines.append(f"> Warning: {w}")
    if d["warnings"]:
        lines.append("")
    if d["suggestions"]:
        lines += ["| Criterion | Current score | Suggestion | Estimated gain |", "|---|---:|---|---:|"]
        for s in d["suggestions"]:
            lines.append(f"| {s['display_name']} | {s['current']:g} | {s['suggested_direction']} to "
                         f"{s['suggested_value']:g} | {100 * s['estimated_gain']:+.1f} pts |")
    else:
        lines.append("No criterion change is associated with a higher merge probability.")
    return "\n".join(lines) + "\n"


def cmd_assess(ctx: Context) -> int:
    args = ctx.args
    model = load_model(Path(args.model) if args.model else ctx.out / "model.json")
    ctx.manifest.inputs["model"] = str(args.model or ctx.out / "model.json")
    explain = json.loads(ctx.input("explain", args.explain, "explain.json").read_text(encoding="utf-8"))
    curves = {c["feature"]: PDCurve.from_dict(c) for c in explain["curves"]}
    ranking = ScottKnottRanking(dict(explain["ranking"]["ranks"]), explain["ranking"]["groups"])

    if bool(args.issue) == bool(args.ref):
        raise InputError("give exactly one of --issue FILE or --ref owner/name#N")
    if args.issue:
        doc = json.loads(ctx.input("issue", args.issue).read_text(encoding="utf-8"))
        if "issue" in doc and "pr" in doc:
            rec = record_from_dict(doc)
            issue, cutoff = rec.issue, rec.pr.created_at
        else:
            issue, cutoff = issue_from_dict(doc), None
    else:
        repo, number = _parse_ref(args.ref)
        with GitHubClient(base_url=ctx.config["github"]["base_url"]) as client:
            issue = client.fetch_issue(repo, number)
        cutoff = None
    if cutoff is None:
        cutoff = datetime.now(timezone.utc)

    cache = ScoreCache(Path(args.cache)) if args.cache else None
    n = int(args.runs or ctx.config["llm"]["runs"])
    llm = _llm_config(ctx.config)
    provider = HttpChatProvider(timeout=llm.timeout)
    try:
        runset = score_runs(issue, llm, n=n, cache=cache, provider=provider)
    finally:
        provider.close()
    consensus = vote(runset)

    warnings = []
    histories = _load_histories(ctx)
    if histories is None:
        warnings.append("no project history given; prior pull-request counts are set to 0")
        history = []
    else:
        history = histories.get(issue.repo, [])
    fv_all = feature_vector(consensus, context_features(issue, cutoff, history))
    fv = {f: fv_all[f] for f in model.feature_names}
    probability = predict_proba(model, fv)
    # guidance needs a background sample for curves it has not seen; the stored curves cover the model
    background = Dataset([runset.record_id], model.feature_names, [[fv[f] for f in model.feature_names]], [0])
    suggestions = [s for s in improvement_guidance(model, background, fv, ranking, curves) if s.estimated_gain > 0]
    for w in warnings:
        log.warning(w)
    data = {
        "issue": f"{issue.repo}#{issue.issue_number}",
        "probability": probability,
        "scores": {k: consensus.scores[k] for k in CRITERION_KEYS},
        "features": fv,
        "suggestions": [{**s.to_dict(), "display_name": get_criterion(s.feature).display_name} for s in suggestions],
        "warnings": warnings,
    }
    ctx.write_report("assess", data, _assess_md)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the command name; SUPPRESS keeps a
    # subcommand's unset copy from clobbering a value given before the command
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--format", choices=("json", "md"), default=argparse.SUPPRESS,
                        help="also write Markdown reports with 'md' (JSON is always written)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="issue-readiness", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", parents=[common], help="download issues and linked pull requests")
    p.add_argument("--input", required=True, help="CSV of owner/name,issue,pr triples")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("score", parents=[common], help="score issues with repeated LLM runs and vote")
    p.add_argument("--corpus")
    p.add_argument("--runs", type=int, help="runs per issue (default from config, 3)")
    p.add_argument("--cache", help="response cache file (default OUT/score_cache.jsonl)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("agreement", parents=[common], help="inter-run agreement per criterion")
    p.add_argument("--runs", dest="runs_file")
    p.add_argument("--metric", choices=("ordinal", "interval", "nominal"))
    p.set_defaults(func=cmd_agreement)

    for name, func, text in (("compare", cmd_compare, "merge rates of high- vs low-scored issues"),
                             ("train-eval", cmd_train_eval, "bootstrap evaluation of all model kinds"),
                             ("explain", cmd_explain, "feature ranking and partial dependence")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--consensus")
        p.add_argument("--corpus")
        if name != "compare":
            p.add_argument("--history")
        if name == "compare":
            p.add_argument("--conjunction", help="comma-separated criteria for the all-high/all-low split")
        if name == "explain":
            p.add_argument("--surface", action="append", help="feature pair 'a,b' for a 2-D surface")
        p.set_defaults(func=func)

    p = sub.add_parser("assess", parents=[common], help="readiness report for one issue")
    p.add_argument("--issue", help="local JSON file with an issue (or corpus record)")
    p.add_argument("--ref", help="owner/name#N to fetch from GitHub")
    p.add_argument("--model")
    p.add_argument("--explain")
    p.add_argument("--history")
    p.add_argument("--runs", type=int)
    p.add_argument("--cache")
    p.set_defaults(func=cmd_assess)
    return parser


GLOBAL_DEFAULTS = {"config": None, "seed": 0, "format": "json", "out": ".", "verbose": False}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for name, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        seed = args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(args.command, config_hash(config), seed, _now())
        ctx = Context(args, config, out, manifest)
        code = args.func(ctx)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IssueReadinessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    manifest.finished_at = _now()
    manifest.notes["exit_code"] = code
    (out / f"{args.command}.manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n",
                                                        encoding="utf-8")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
