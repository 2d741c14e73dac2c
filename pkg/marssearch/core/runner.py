"""Jobs behind the CLI subcommands, each leaving a provenance manifest."""

import sys
from dataclasses import asdict
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import marssearch
from marssearch.core.config import (
    DEFAULT_CACHE_FRACTIONS,
    ClickModel,
    CorpusSynthConfig,
    LogSynthConfig,
    PolicyConfig,
    PolicyKind,
    QualityParams,
    RecallConfig,
    RecallScenario,
    RunConfig,
    ScenarioKind,
    ShippingCadence,
    StopRule,
    TableFormat,
)
from marssearch.core.metrics import (
    GAIN_HEADER,
    HIT_RATIO_HEADER,
    SESSION_HEADER,
    TABLE_HEADER,
    emit_reports,
    format_row,
    gain_curve_rows,
    hit_ratio_rows,
    session_rows,
    table_rows,
)
from marssearch.core.models import (
    Corpus,
    GainCurve,
    RunManifest,
    SimulationResult,
    SuggestionReport,
)
from marssearch.core.quality import (
    annotate_quality,
    build_training_set,
    cache_hit_curve,
    evaluate_quality,
    select_cache,
    static_rank,
    train_quality,
)
from marssearch.core.retrieval import (
    build_index,
    load_corpus,
    load_qrels,
    qrels_from_corpus,
    save_corpus,
    save_qrels,
    synthesize_corpus,
)
from marssearch.core.sessionlog import (
    load_session_log,
    query_pool_from_corpus,
    save_session_log,
    synthesize_log,
)
from marssearch.core.strategies import (
    SuggestionProvider,
    replay_log,
    suggestion_matches,
    topical_prefetch_hits,
)
from marssearch.core.totalrecall import default_grid, mean_gain_curve, run_topics
from marssearch.utils.io import (
    atomic_write_text,
    file_digest,
    load_json,
    read_lines,
    render_table,
    save_json,
    write_table,
)
from marssearch.utils.logger import logger

MANIFEST_NAME = "manifest.json"


def _jsonable(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [_jsonable(v) for v in value]
        return sorted(items) if isinstance(value, (set, frozenset)) else items
    return value


def lag_label(lag_min: float) -> str:
    return str(int(lag_min)) if float(lag_min).is_integer() else f"{lag_min:g}"


def train_static_ranker(corpus: Corpus, seed: int):
    """Train the content-only quality model on the corpus labels."""
    positives, negatives = build_training_set(corpus, seed=seed)
    model = train_quality(positives, negatives, QualityParams(seed=seed))
    logger.info(f"Quality model AUC on its training data: {evaluate_quality(model, positives, negatives):.4f}")
    return model


class Runner:
    """Runs one subcommand and records what went in and what came out."""

    def __init__(self, config: RunConfig, argv: Optional[Sequence[str]] = None):
        self.config = config
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.out_dir = Path(config.output_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: Dict[str, str] = {}
        self.outputs: List[Path] = []

    def _input(self, file_path: str | Path) -> Path:
        path = Path(file_path)
        if not path.is_file():
            raise FileNotFoundError(f"Input file not found: {path}")
        self.inputs[str(path)] = file_digest(path)
        return path

    def _output(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return path

    def _finish(self) -> Path:
        outputs = sorted(
            str(p.relative_to(self.out_dir)) if p.is_relative_to(self.out_dir) else str(p)
            for p in self.outputs
        )
        manifest = RunManifest(
            subcommand=self.config.subcommand,
            argv=self.argv,
            config=_jsonable(asdict(self.config)),
            seed=self.config.seed,
            version=marssearch.__version__,
            inputs=dict(sorted(self.inputs.items())),
            outputs=outputs,
        )
        path = self.out_dir / MANIFEST_NAME
        save_json(manifest, path)
        return path

    # -- generators -------------------------------------------------------

    def gen_corpus(self, n_docs: int, n_topics: int, prevalence: float) -> Corpus:
        logger.info("Phase 1: Synthesizing corpus...")
        corpus = synthesize_corpus(
            CorpusSynthConfig(
                n_docs=n_docs, n_topics=n_topics, prevalence=prevalence, seed=self.config.seed
            )
        )

        logger.info("Phase 2: Writing corpus and qrels...")
        self._output(save_corpus(corpus, self.out_dir / "corpus.jsonl"))
        self._output(save_qrels(corpus, self.out_dir / "qrels.txt"))
        self._finish()
        return corpus

    def gen_log(
        self,
        corpus_path: str | Path,
        out_file: str | Path,
        n_sessions: int,
        click_model: ClickModel = ClickModel.POSITION,
        topical_serps: bool = True,
    ):
        corpus = load_corpus(self._input(corpus_path))
        if click_model is ClickModel.QUALITY and any(d.quality is None for d in corpus.documents):
            logger.info("Scoring document quality for the click model...")
            corpus = annotate_quality(corpus, train_static_ranker(corpus, self.config.seed))

        config = LogSynthConfig(
            n_sessions=n_sessions,
            query_pool=query_pool_from_corpus(corpus),
            click_model=click_model,
            seed=self.config.seed,
        )
        index = build_index(corpus) if topical_serps else None
        log = synthesize_log(config, corpus, index)
        self._output(save_session_log(log, out_file))
        self._finish()
        return log

    # -- simulations ------------------------------------------------------

    def sessions_sim(
        self,
        log_path: str | Path,
        policy: PolicyConfig,
        corpus_path: Optional[str | Path] = None,
        cache_list: Optional[str | Path] = None,
        suggestions: Optional[str | Path] = None,
        fmt: TableFormat = TableFormat.CSV,
    ) -> SimulationResult:
        logger.info("Phase 1: Loading inputs...")
        log = load_session_log(self._input(log_path))
        corpus = load_corpus(self._input(corpus_path)) if corpus_path else None

        cache = index = provider = None
        if policy.kind is PolicyKind.STATIC_CACHE:
            if cache_list:
                cache = set(read_lines(self._input(cache_list)))
            elif corpus is not None:
                model = train_static_ranker(corpus, self.config.seed)
                cache = select_cache(model, corpus, policy.cache_fraction)
            else:
                raise ValueError("The cache policy needs --corpus or --cache-list")
            logger.info(f"Cache holds {len(cache)} documents")
        elif policy.kind is PolicyKind.TOPICAL_PREFETCH:
            if corpus is None:
                raise ValueError("The topical policy needs --corpus")
            index = build_index(corpus)
        elif policy.kind is PolicyKind.SUGGESTION_PREFETCH:
            if suggestions is None:
                raise ValueError("The suggest policy needs --suggestions")
            provider = SuggestionProvider.from_file(self._input(suggestions))

        logger.info("Phase 2: Replaying sessions...")
        link = self.config.link
        result = replay_log(log, policy, link, cache=cache, index=index, provider=provider)

        logger.info("Phase 3: Writing results...")
        tag = f"{policy.kind.value}_{lag_label(link.rtt_minutes)}"
        ext = TableFormat(fmt).value
        self._output(self.out_dir / f"outcomes_{tag}.json")
        save_json(result, self.out_dir / f"outcomes_{tag}.json")
        self._output(
            write_table(self.out_dir / f"sessions_{tag}.{ext}", SESSION_HEADER, session_rows(result.outcomes), ext)
        )
        rows = [format_row(row) for row in table_rows([result])]
        self._output(write_table(self.out_dir / f"summary_{tag}.{ext}", TABLE_HEADER, rows, ext))
        if index is not None:
            hits = topical_prefetch_hits(log, index, policy.k)
            self._output(self.out_dir / f"hits_{tag}.json")
            save_json(hits, self.out_dir / f"hits_{tag}.json")
        self._finish()
        return result

    def recall_sim(
        self,
        corpus_path: str | Path,
        scenario: ScenarioKind,
        qrels_path: Optional[str | Path] = None,
        cache_seed: Optional[str | Path] = None,
        cache_fraction: float = 0.05,
        cadence: ShippingCadence = ShippingCadence.STREAM,
        stop: StopRule = StopRule(),
        workers: int = 1,
        fmt: TableFormat = TableFormat.CSV,
    ) -> List[GainCurve]:
        logger.info("Phase 1: Loading inputs...")
        corpus = load_corpus(self._input(corpus_path))
        qrels = load_qrels(self._input(qrels_path)) if qrels_path else qrels_from_corpus(corpus)

        seed_set = None
        if ScenarioKind(scenario) is ScenarioKind.MARS_TAR_CACHE:
            if cache_seed:
                seed_set = frozenset(read_lines(self._input(cache_seed)))
            else:
                n = int(cache_fraction * len(corpus.documents))
                seed_set = frozenset(doc.docid for doc in corpus.documents[:n])
            logger.info(f"Mars cache seeded with {len(seed_set)} documents")

        recall_scenario = RecallScenario(
            kind=scenario, link=self.config.link, cache_seed=seed_set, cadence=cadence
        )

        logger.info("Phase 2: Running continuous active learning...")
        curves = run_topics(
            recall_scenario,
            corpus,
            qrels,
            stop,
            RecallConfig(seed=self.config.seed, quality=QualityParams(seed=self.config.seed)),
            workers=workers,
        )

        logger.info("Phase 3: Writing gain curves...")
        ext = TableFormat(fmt).value
        tag = f"{recall_scenario.kind.value}_{lag_label(self.config.link.rtt_minutes)}"
        for curve in curves:
            path = self.out_dir / f"gain_{tag}_{curve.topic}.{ext}"
            self._output(write_table(path, GAIN_HEADER, gain_curve_rows(curve), ext))
        mean = mean_gain_curve(curves, default_grid(curves))
        self._output(
            write_table(
                self.out_dir / f"gain_{tag}_mean.{ext}",
                ("time_s", "recall"),
                [[f"{t:.3f}", f"{r:.4f}"] for t, r in mean],
                ext,
            )
        )
        self._finish()
        return curves

    # -- evaluations ------------------------------------------------------

    def cache_eval(
        self,
        log_path: str | Path,
        corpus_path: str | Path,
        fractions: Sequence[float] = DEFAULT_CACHE_FRACTIONS,
        fmt: TableFormat = TableFormat.CSV,
    ):
        log = load_session_log(self._input(log_path))
        corpus = load_corpus(self._input(corpus_path))

        logger.info("Phase 1: Training static ranker...")
        ranking = static_rank(train_static_ranker(corpus, self.config.seed), corpus)
        self._output(atomic_write_text(self.out_dir / "ranking.txt", "\n".join(ranking) + "\n"))

        logger.info("Phase 2: Measuring cache hit ratios...")
        reports = cache_hit_curve(log, ranking, fractions)
        ext = TableFormat(fmt).value
        self._output(
            write_table(self.out_dir / f"hit_ratios.{ext}", HIT_RATIO_HEADER, hit_ratio_rows(reports), ext)
        )
        self._finish()
        return reports

    def suggest_eval(self, log_path: str | Path, suggestions: str | Path) -> SuggestionReport:
        log = load_session_log(self._input(log_path))
        provider = SuggestionProvider.from_file(self._input(suggestions))
        report = SuggestionReport(
            matches=suggestion_matches(log, provider),
            sessions=len(log.sessions),
            queries=sum(len(s.interactions) for s in log.sessions),
            provider_queries=len(provider),
        )
        logger.info(f"{report.matches} later queries match an earlier suggestion verbatim")
        self._output(self.out_dir / "suggestions.json")
        save_json(report, self.out_dir / "suggestions.json")
        self._finish()
        return report

    def report(self, fmt: TableFormat = TableFormat.CSV) -> str:
        """Merge every outcomes*.json in the output directory into one table."""
        paths = sorted(self.out_dir.glob("outcomes*.json"))
        results = [load_json(self._input(path), SimulationResult) for path in paths]
        if not results:
            logger.warning(f"No outcomes*.json files in {self.out_dir}")
        ext = TableFormat(fmt).value
        for path in emit_reports(results, self.out_dir, ext):
            self._output(path)
        self._finish()
        return render_table(TABLE_HEADER, [format_row(r) for r in table_rows(results)], ext)
