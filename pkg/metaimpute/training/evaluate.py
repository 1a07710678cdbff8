"""
Scoring imputation methods on episode suites, and the tab-separated report
files the scores are kept in.

A report has one row per ``(method, setting, episode)`` and one aggregate row
per ``(method, setting)`` whose ``episode`` column reads ``mean``:

.. code-block:: text

    method	dataset	setting	episode	test_mse	test_stderr	train_mse
    ours	ml-100k	default	0	0.8734...	0	0.2251...
    ...
    ours	ml-100k	default	mean	0.9012...	0.0331...	0.2417...
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import Self

from metaimpute.baselines import mean_predict, mf_predict, prior_product_predict
from metaimpute.data.episodes import Episode
from metaimpute.exceptions import ContractError, ParseError
from metaimpute.imputer import ModelParams, impute
from metaimpute.models import AdaptConfig, MFConfig
from metaimpute.ndgrad import Tensor
from metaimpute.training.checkpoint import Checkpoint
from metaimpute.utils import format_float, standard_error

logger = logging.getLogger(__name__)

Predictor = Callable[[Tensor, Tensor], Tensor]

METHODS = ("ours", "mean", "mf", "prior-product")
AGGREGATE = "mean"
COLUMNS = (
    "method",
    "dataset",
    "setting",
    "episode",
    "test_mse",
    "test_stderr",
    "train_mse",
)


@dataclass
class ReportRow:
    method: str
    dataset: str
    setting: str
    episode: str
    test_mse: float
    test_stderr: float
    train_mse: float

    @property
    def is_aggregate(self) -> bool:
        return self.episode == AGGREGATE

    def to_line(self) -> str:
        return "\t".join(
            [
                self.method,
                self.dataset or "-",
                self.setting or "-",
                self.episode,
                format_float(self.test_mse),
                format_float(self.test_stderr),
                format_float(self.train_mse),
            ]
        )

    @classmethod
    def from_line(cls, line: str) -> Self:
        fields = line.split("\t")
        if len(fields) != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} columns, got {len(fields)}")
        method, dataset, setting, episode = fields[:4]
        numbers = [float(value) for value in fields[4:]]
        return cls(
            method,
            "" if dataset == "-" else dataset,
            "" if setting == "-" else setting,
            episode,
            *numbers,
        )


@dataclass
class Report:
    rows: List[ReportRow] = field(default_factory=list)

    def extend(self, rows: Iterable[ReportRow]) -> None:
        self.rows.extend(rows)

    def aggregates(self) -> List[ReportRow]:
        return [row for row in self.rows if row.is_aggregate]

    def to_text(self) -> str:
        return "\n".join(["\t".join(COLUMNS)] + [row.to_line() for row in self.rows]) + "\n"

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")
        logger.info("Wrote %d report rows to %s", len(self.rows), path)

    @classmethod
    def read(cls, path: Union[str, Path]) -> Self:
        """
        Raises:
            ParseError: if the header or a row is malformed.
        """
        path = Path(path)
        report = cls()
        with path.open(encoding="utf-8") as fp:
            for line_number, raw in enumerate(fp, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                if line_number == 1:
                    if tuple(line.split("\t")) != COLUMNS:
                        raise ParseError("not a report header", path=str(path), line_number=1)
                    continue
                try:
                    report.rows.append(ReportRow.from_line(line))
                except ValueError as exc:
                    raise ParseError(str(exc), path=str(path), line_number=line_number) from exc
        return report


def masked_mse(prediction: Tensor, truth: Tensor, mask: Tensor) -> float:
    count = float(mask.sum())
    if count == 0:
        return 0.0
    return float((mask * (prediction - truth) ** 2).sum() / count)


def score_episode(predictor: Predictor, episode: Episode) -> Tuple[float, float]:
    """
    ``(test_mse, train_mse)`` of one episode.
    """
    prediction = predictor(episode.X, episode.B)
    if not np.isfinite(prediction).all():
        raise ContractError("prediction is not finite")
    return (
        masked_mse(prediction, episode.Xp, episode.Bp),
        masked_mse(prediction, episode.X, episode.B),
    )


def evaluate_predictor(
    predictor: Predictor,
    suite: Sequence[Episode],
    method: str,
    dataset: str = "",
    setting: str = "",
    workers: int = 1,
) -> List[ReportRow]:
    """
    Score ``predictor`` on every episode, then add the aggregate row (mean
    test MSE with its standard error, mean train MSE). The time taken is
    logged, not reported.
    """
    if not suite:
        raise ContractError("cannot evaluate on an empty suite")
    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda ep: score_episode(predictor, ep), suite))
    else:
        scores = [score_episode(predictor, ep) for ep in suite]
    seconds = time.perf_counter() - start

    rows = [
        ReportRow(method, dataset, setting, str(i), test, 0.0, train)
        for i, (test, train) in enumerate(scores)
    ]
    tests = [row.test_mse for row in rows]
    rows.append(
        ReportRow(
            method,
            dataset,
            setting,
            AGGREGATE,
            float(np.mean(tests)),
            standard_error(tests),
            float(np.mean([row.train_mse for row in rows])),
        )
    )
    logger.info(
        "%s %s %s: test MSE %.4f ± %.4f (%d episodes in %.2fs)",
        method,
        dataset or "-",
        setting or "-",
        rows[-1].test_mse,
        rows[-1].test_stderr,
        len(suite),
        seconds,
    )
    return rows


def evaluate(
    ckpt: Union[Checkpoint, ModelParams],
    suite: Sequence[Episode],
    cfg: Optional[AdaptConfig] = None,
    dataset: str = "",
    setting: str = "",
    workers: int = 1,
) -> List[ReportRow]:
    """
    Score the meta-trained model on ``suite``. ``cfg`` defaults to the
    adaptation settings stored in the checkpoint.
    """
    if isinstance(ckpt, Checkpoint):
        params = ckpt.model_params()
        cfg = cfg or ckpt.config.adapt_settings()
    else:
        params = ckpt
        cfg = cfg or AdaptConfig()
    adapt = cfg
    return evaluate_predictor(
        lambda X, B: impute(X, B, params, adapt), suite, "ours", dataset, setting, workers
    )


def evaluate_methods(
    ckpt: Optional[Checkpoint],
    suite: Sequence[Episode],
    methods: Sequence[str] = METHODS,
    mf_config: Optional[MFConfig] = None,
    adapt: Optional[AdaptConfig] = None,
    dataset: str = "",
    setting: str = "",
    workers: int = 1,
) -> List[ReportRow]:
    """
    Score several methods on the same suite. ``ours`` and ``prior-product``
    need a checkpoint.
    """
    unknown = sorted(set(methods) - set(METHODS))
    if unknown:
        raise ContractError(f"unknown methods {unknown}; expected some of {list(METHODS)}")
    params = ckpt.model_params() if ckpt is not None else None
    predictors: Dict[str, Predictor] = {
        "mean": mean_predict,
        "mf": lambda X, B: mf_predict(X, B, mf_config),
    }
    if params is not None:
        assert ckpt is not None
        adapt = adapt or ckpt.config.adapt_settings()
        predictors["ours"] = lambda X, B: impute(X, B, params, adapt)  # type: ignore[arg-type]
        predictors["prior-product"] = lambda X, B: prior_product_predict(X, B, params)

    rows: List[ReportRow] = []
    for method in methods:
        if method not in predictors:
            raise ContractError(f"method {method!r} needs a checkpoint")
        rows.extend(evaluate_predictor(predictors[method], suite, method, dataset, setting, workers))
    return rows


def summary_table(rows: Iterable[ReportRow], precision: int = 3) -> str:
    """
    Tab-separated ``method x dataset/setting`` table of ``mean ± stderr``
    built from aggregate rows; later rows win on duplicates.
    """
    cells: Dict[Tuple[str, str], ReportRow] = {}
    methods: List[str] = []
    columns: List[str] = []
    for row in rows:
        if not row.is_aggregate:
            continue
        column = "/".join(part for part in (row.dataset, row.setting) if part) or "-"
        if row.method not in methods:
            methods.append(row.method)
        if column not in columns:
            columns.append(column)
        cells[(row.method, column)] = row

    lines = ["\t".join(["method"] + columns)]
    for method in methods:
        line = [method]
        for column in columns:
            row = cells.get((method, column))
            line.append(
                "-" if row is None else f"{row.test_mse:.{precision}f} ± {row.test_stderr:.{precision}f}"
            )
        lines.append("\t".join(line))
    return "\n".join(lines) + "\n"
