"""Command line interface for marssearch."""

import sys
from pathlib import Path
from typing import List, Optional

import typer
from pydantic import ValidationError

from marssearch.core.config import (
    DEFAULT_CACHE_FRACTIONS,
    DEFAULT_SEED,
    ClickModel,
    PolicyConfig,
    PolicyKind,
    RunConfig,
    ScenarioKind,
    ShippingCadence,
    StopRule,
    TableFormat,
)
from marssearch.core.runner import Runner
from marssearch.utils.logger import log_error, logger, set_level

app = typer.Typer(no_args_is_help=True, pretty_exceptions_enable=False)

# Newer typer releases ship their own copy of click; take the base class from what typer raises.
UsageError = next(c for c in typer.BadParameter.__mro__ if c.__name__ == "UsageError")


def _config(subcommand: str, **kwargs) -> RunConfig:
    try:
        return RunConfig(subcommand=subcommand, **kwargs)
    except ValueError as e:
        raise UsageError(str(e))


def _fractions(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected comma separated numbers, got '{text}'", param_hint="--fractions")
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise typer.BadParameter("fractions must lie in [0, 1]", param_hint="--fractions")
    return values


@app.callback()
def root(
    log_level: str = typer.Option("INFO", "--log-level", help="DEBUG, INFO, WARNING or ERROR"),
):
    """Simulate interactive search and high-recall review from Mars."""
    set_level(log_level)


@app.command("gen-corpus")
def gen_corpus(
    docs: int = typer.Option(2000, "--docs", min=1, help="Number of documents"),
    topics: int = typer.Option(5, "--topics", min=1, help="Number of topics"),
    prevalence: float = typer.Option(0.05, "--prevalence", help="Relevant share per topic"),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", help="Random seed"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
):
    """Generate a labelled synthetic corpus with qrels."""
    config = _config("gen-corpus", seed=seed, output_dir=str(out), options={"docs": docs, "topics": topics, "prevalence": prevalence})
    corpus = Runner(config).gen_corpus(docs, topics, prevalence)
    typer.echo(f"✅ Generated {len(corpus.documents)} documents over {len(corpus.topics)} topics")
    typer.echo(f"📁 Output directory: {out}")


@app.command("gen-log")
def gen_log(
    corpus: Path = typer.Option(..., "--corpus", help="Corpus JSONL"),
    out: Path = typer.Option(..., "--out", help="Output session log (canonical JSON)"),
    sessions: int = typer.Option(100, "--sessions", min=1, help="Number of sessions"),
    click_model: ClickModel = typer.Option(ClickModel.POSITION, "--click-model", help="How results get clicked"),
    random_serps: bool = typer.Option(False, "--random-serps", help="Draw SERPs at random instead of by BM25"),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", help="Random seed"),
):
    """Generate a synthetic search session log over a corpus."""
    config = _config(
        "gen-log",
        seed=seed,
        inputs={"corpus": str(corpus)},
        output_dir=str(out.parent),
        options={"sessions": sessions, "click_model": click_model, "random_serps": random_serps},
    )
    log = Runner(config).gen_log(corpus, out, sessions, click_model, topical_serps=not random_serps)
    typer.echo(f"✅ Generated {len(log.sessions)} sessions")
    typer.echo(f"📄 Saved to: {out}")


@app.command("sessions-sim")
def sessions_sim(
    log: Path = typer.Option(..., "--log", help="Session log (XML or canonical JSON)"),
    policy: PolicyKind = typer.Option(PolicyKind.BASELINE, "--policy", help="Latency remediation policy"),
    rtt_min: float = typer.Option(8.0, "--rtt-min", help="Roundtrip lag in minutes (8 and 48 are typical)"),
    k: Optional[int] = typer.Option(None, "--k", help="Topical prefetch depth"),
    cache_fraction: Optional[float] = typer.Option(None, "--cache-fraction", help="Share of the corpus cached on Mars"),
    corpus: Optional[Path] = typer.Option(None, "--corpus", help="Corpus JSONL (cache ranking, topical index)"),
    cache_list: Optional[Path] = typer.Option(None, "--cache-list", help="Cached docids, one per line"),
    suggestions: Optional[Path] = typer.Option(None, "--suggestions", help="Query suggestions (JSON or TSV)"),
    suggestion_depth: int = typer.Option(8, "--suggestion-depth", min=0, help="Suggestions Earth runs per query"),
    fmt: TableFormat = typer.Option(TableFormat.CSV, "--format", help="Table format"),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", help="Random seed"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
):
    """Replay a session log from Mars under a policy."""
    config = _config(
        "sessions-sim",
        seed=seed,
        rtt_minutes=rtt_min,
        output_dir=str(out),
        inputs={k_: str(v) for k_, v in {"log": log, "corpus": corpus, "cache_list": cache_list, "suggestions": suggestions}.items() if v},
        options={"policy": policy, "k": k, "cache_fraction": cache_fraction, "suggestion_depth": suggestion_depth},
    )
    try:
        policy_config = PolicyConfig(
            kind=policy,
            k=k,
            cache_fraction=cache_fraction,
            suggestion_source=str(suggestions) if suggestions else None,
            suggestion_depth=suggestion_depth,
        )
    except ValueError as e:
        raise UsageError(str(e))

    result = Runner(config).sessions_sim(log, policy_config, corpus, cache_list, suggestions, fmt)
    typer.echo(f"✅ Replayed {len(result.outcomes)} sessions [{policy.value}, {rtt_min:g} min]")
    typer.echo(f"📁 Output directory: {out}")


@app.command("recall-sim")
def recall_sim(
    corpus: Path = typer.Option(..., "--corpus", help="Corpus JSONL"),
    scenario: ScenarioKind = typer.Option(..., "--scenario", help="Where the assessor and the classifier run"),
    rtt_min: float = typer.Option(48.0, "--rtt-min", help="Roundtrip lag in minutes"),
    qrels: Optional[Path] = typer.Option(None, "--qrels", help="TREC qrels (default: corpus labels)"),
    cache_seed: Optional[Path] = typer.Option(None, "--cache-seed", help="Docids cached on Mars, one per line"),
    cache_fraction: float = typer.Option(0.05, "--cache-fraction", help="Default cache: this share of the corpus, in order"),
    cadence: ShippingCadence = typer.Option(ShippingCadence.STREAM, "--cadence", help="How Earth ships to Mars"),
    time_budget_s: Optional[float] = typer.Option(None, "--time-budget-s", help="Stop after this much virtual time"),
    recall_target: Optional[float] = typer.Option(None, "--recall-target", help="Stop at this recall"),
    workers: int = typer.Option(1, "--workers", min=1, help="Worker processes across topics"),
    fmt: TableFormat = typer.Option(TableFormat.CSV, "--format", help="Table format"),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", help="Random seed"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
):
    """Simulate continuous active learning under a latency scenario."""
    config = _config(
        "recall-sim",
        seed=seed,
        rtt_minutes=rtt_min,
        output_dir=str(out),
        inputs={k_: str(v) for k_, v in {"corpus": corpus, "qrels": qrels, "cache_seed": cache_seed}.items() if v},
        options={
            "scenario": scenario,
            "cadence": cadence,
            "cache_fraction": cache_fraction,
            "time_budget_s": time_budget_s,
            "recall_target": recall_target,
            "workers": workers,
        },
    )
    if not 0.0 <= cache_fraction <= 1.0:
        raise typer.BadParameter("must lie in [0, 1]", param_hint="--cache-fraction")
    try:
        stop = StopRule(time_budget_s=time_budget_s, recall_target=recall_target)
    except ValueError as e:
        raise UsageError(str(e))

    curves = Runner(config).recall_sim(
        corpus, scenario, qrels, cache_seed, cache_fraction, cadence, stop, workers, fmt
    )
    for curve in curves:
        typer.echo(f"{curve.topic}: recall {curve.final_recall:.3f} at t={curve.points[-1].time_s:.0f}s")
    typer.echo(f"📁 Output directory: {out}")


@app.command("cache-eval")
def cache_eval(
    log: Path = typer.Option(..., "--log", help="Session log"),
    corpus: Path = typer.Option(..., "--corpus", help="Corpus JSONL"),
    fractions: str = typer.Option(",".join(f"{f:.2f}" for f in DEFAULT_CACHE_FRACTIONS), "--fractions", help="Cache fractions"),
    fmt: TableFormat = typer.Option(TableFormat.CSV, "--format", help="Table format"),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", help="Random seed"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
):
    """Hit ratios of a static-rank cache for clicked and SERP pages."""
    values = _fractions(fractions)
    config = _config(
        "cache-eval",
        seed=seed,
        output_dir=str(out),
        inputs={"log": str(log), "corpus": str(corpus)},
        options={"fractions": values},
    )
    for report in Runner(config).cache_eval(log, corpus, values, fmt):
        typer.echo(
            f"{report.fraction:.2%}: clicked {report.clicked_hits}/{report.clicked_total}, "
            f"SERP {report.serp_hits}/{report.serp_total}"
        )
    typer.echo(f"📁 Output directory: {out}")


@app.command("suggest-eval")
def suggest_eval(
    log: Path = typer.Option(..., "--log", help="Session log"),
    suggestions: Path = typer.Option(..., "--suggestions", help="Query suggestions (JSON or TSV)"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
):
    """Count later queries that an earlier suggestion predicted verbatim."""
    config = _config(
        "suggest-eval",
        output_dir=str(out),
        inputs={"log": str(log), "suggestions": str(suggestions)},
    )
    report = Runner(config).suggest_eval(log, suggestions)
    typer.echo(f"✅ {report.matches} verbatim matches over {report.sessions} sessions")


@app.command("report")
def report(
    in_dir: Path = typer.Option(..., "--in", help="Directory holding outcomes*.json"),
    fmt: TableFormat = typer.Option(TableFormat.CSV, "--format", help="Table format"),
):
    """Merge session simulations into one effort/data table."""
    if not in_dir.is_dir():
        raise typer.BadParameter(f"not a directory: {in_dir}", param_hint="--in")
    config = _config("report", output_dir=str(in_dir), options={"format": fmt})
    typer.echo(Runner(config).report(fmt), nl=False)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point for the marssearch CLI; returns the process exit code."""
    args = sys.argv[1:] if argv is None else list(argv)
    if not args:
        app(args=["--help"], prog_name="marssearch", standalone_mode=False)
        return 2

    try:
        code = app(args=args, prog_name="marssearch", standalone_mode=False)
    except UsageError as e:
        e.show()
        return 2
    except typer.Abort:
        typer.echo("Aborted", err=True)
        return 1
    except (ValueError, OSError, ValidationError) as e:
        log_error(logger, f"{type(e).__name__}: {e}")
        return 1
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
