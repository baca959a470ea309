"""Study-level 2x2 tables, CSV ingestion and the bundled telomerase data."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("study", "tp", "fp", "fn", "tn")


class DatasetError(ValueError):
    """Raised for malformed or invalid study data."""


@dataclass(frozen=True)
class StudyRecord:
    study_id: str
    tp: int
    fp: int
    fn_: int
    tn: int
    covariates_se: tuple[float, ...] = ()
    covariates_sp: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn_", "tn"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise DatasetError(f"study {self.study_id!r}: {name} must be an integer, got {value!r}")
            if value < 0:
                raise DatasetError(f"study {self.study_id!r}: {name} must be nonnegative, got {value}")
        if self.tp + self.fn_ < 1:
            raise DatasetError(f"study {self.study_id!r}: needs at least one diseased subject (tp + fn >= 1)")
        if self.tn + self.fp < 1:
            raise DatasetError(f"study {self.study_id!r}: needs at least one non-diseased subject (tn + fp >= 1)")

    @property
    def n_diseased(self) -> int:
        return self.tp + self.fn_

    @property
    def n_healthy(self) -> int:
        return self.tn + self.fp

    @property
    def n_total(self) -> int:
        return self.n_diseased + self.n_healthy


@dataclass(frozen=True)
class Dataset:
    studies: tuple[StudyRecord, ...]
    name: str = "dataset"
    se_covariate_names: tuple[str, ...] = field(default=())
    sp_covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "studies", tuple(self.studies))
        if len(self.studies) < 2:
            raise DatasetError("dataset must contain ≥ 2 studies")
        ids = [s.study_id for s in self.studies]
        seen: set[str] = set()
        for row, sid in enumerate(ids, start=1):
            if sid in seen:
                raise DatasetError(f"row {row}: duplicate study id {sid!r}")
            seen.add(sid)
        p_se = {len(s.covariates_se) for s in self.studies}
        p_sp = {len(s.covariates_sp) for s in self.studies}
        if len(p_se) > 1 or len(p_sp) > 1:
            raise DatasetError("covariate vectors must have the same length in every study")

    def __len__(self) -> int:
        return len(self.studies)

    @property
    def p_se(self) -> int:
        return len(self.studies[0].covariates_se)

    @property
    def p_sp(self) -> int:
        return len(self.studies[0].covariates_sp)

    @property
    def has_covariates(self) -> bool:
        return self.p_se + self.p_sp > 0

    def arrays(self) -> dict[str, np.ndarray]:
        """Counts as integer arrays keyed ``tp``, ``fp``, ``fn``, ``tn``."""
        return {
            "tp": np.array([s.tp for s in self.studies], dtype=np.int64),
            "fp": np.array([s.fp for s in self.studies], dtype=np.int64),
            "fn": np.array([s.fn_ for s in self.studies], dtype=np.int64),
            "tn": np.array([s.tn for s in self.studies], dtype=np.int64),
        }

    def covariate_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        U = np.array([s.covariates_se for s in self.studies], dtype=float).reshape(len(self), self.p_se)
        V = np.array([s.covariates_sp for s in self.studies], dtype=float).reshape(len(self), self.p_sp)
        return U, V

    def swapped(self) -> "Dataset":
        """Exchange the roles of diseased and non-diseased (TP<->TN, FN<->FP)."""
        studies = [
            StudyRecord(s.study_id, tp=s.tn, fp=s.fn_, fn_=s.fp, tn=s.tp,
                        covariates_se=s.covariates_sp, covariates_sp=s.covariates_se)
            for s in self.studies
        ]
        return Dataset(tuple(studies), name=f"{self.name}-swapped",
                       se_covariate_names=self.sp_covariate_names,
                       sp_covariate_names=self.se_covariate_names)

    def reordered(self, order: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.studies[i] for i in order), name=self.name,
                       se_covariate_names=self.se_covariate_names,
                       sp_covariate_names=self.sp_covariate_names)

    def scaled(self, factor: int) -> "Dataset":
        studies = [
            StudyRecord(s.study_id, s.tp * factor, s.fp * factor, s.fn_ * factor, s.tn * factor,
                        s.covariates_se, s.covariates_sp)
            for s in self.studies
        ]
        return Dataset(tuple(studies), name=f"{self.name}-x{factor}",
                       se_covariate_names=self.se_covariate_names,
                       sp_covariate_names=self.sp_covariate_names)


def _parse_count(raw: str, row: int, column: str) -> int:
    text = raw.strip()
    try:
        value = int(text)
    except ValueError:
        try:
            as_float = float(text)
        except ValueError:
            raise DatasetError(f"row {row}, column {column!r}: {raw!r} is not a number") from None
        if not as_float.is_integer():
            raise DatasetError(f"row {row}, column {column!r}: count {raw!r} is not an integer") from None
        value = int(as_float)
    if value < 0:
        raise DatasetError(f"row {row}, column {column!r}: count {value} is negative")
    return value


def parse_dataset_csv(
    text: str | TextIO,
    name: str = "dataset",
    se_covariates: Iterable[str] = (),
    sp_covariates: Iterable[str] = (),
) -> Dataset:
    """Parse a study table from CSV.

    The header must name ``study``, ``TP``, ``FP``, ``FN`` and ``TN`` (any
    order, case-insensitive). Lines starting with ``#`` are skipped. Extra
    columns are ignored unless listed in `se_covariates` / `sp_covariates`.
    Row numbers in error messages count data rows from 1.
    """
    if not isinstance(text, str):
        text = text.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DatasetError("empty input: header row required")
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = [h.strip() for h in next(reader)]
    index = {h.lower(): i for i, h in enumerate(header)}
    missing = [c for c in REQUIRED_COLUMNS if c not in index]
    if missing:
        raise DatasetError(f"missing required column(s): {', '.join(missing)}")

    se_cols = [c.lower() for c in se_covariates]
    sp_cols = [c.lower() for c in sp_covariates]
    for col in se_cols + sp_cols:
        if col not in index:
            raise DatasetError(f"covariate column {col!r} not found in header")
    extras = set(index) - set(REQUIRED_COLUMNS) - set(se_cols) - set(sp_cols)
    if extras:
        logger.warning("ignoring extra column(s): %s", ", ".join(sorted(extras)))

    studies = []
    seen: set[str] = set()
    for row, fields in enumerate(reader, start=1):
        if len(fields) < len(header):
            raise DatasetError(f"row {row}: expected {len(header)} fields, got {len(fields)}")
        sid = fields[index["study"]].strip()
        if sid in seen:
            raise DatasetError(f"row {row}, column 'study': duplicate study id {sid!r}")
        seen.add(sid)
        counts = {c: _parse_count(fields[index[c]], row, header[index[c]]) for c in ("tp", "fp", "fn", "tn")}

        def covs(cols: list[str]) -> tuple[float, ...]:
            out = []
            for c in cols:
                try:
                    out.append(float(fields[index[c]]))
                except ValueError:
                    raise DatasetError(f"row {row}, column {c!r}: {fields[index[c]]!r} is not numeric") from None
            return tuple(out)

        try:
            studies.append(StudyRecord(sid, counts["tp"], counts["fp"], counts["fn"], counts["tn"],
                                       covs(se_cols), covs(sp_cols)))
        except DatasetError as exc:
            raise DatasetError(f"row {row}: {exc}") from None
    return Dataset(tuple(studies), name=name,
                   se_covariate_names=tuple(se_cols), sp_covariate_names=tuple(sp_cols))


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["study", "TP", "FP", "FN", "TN", *dataset.se_covariate_names, *dataset.sp_covariate_names])
    for s in dataset.studies:
        writer.writerow([s.study_id, s.tp, s.fp, s.fn_, s.tn, *map(repr, s.covariates_se), *map(repr, s.covariates_sp)])
    return buf.getvalue()


# (study, TP, FN, TN, FP) in the column order of the published table.
_TELOMERASE = (
    ("Ito", 25, 8, 25, 1),
    ("Rahat", 17, 4, 11, 3),
    ("Kavaler", 88, 16, 31, 16),
    ("Yoshida", 16, 10, 80, 3),
    ("Ramakumar", 40, 17, 137, 1),
    ("Landman", 38, 9, 24, 6),
    ("Kinoshita", 23, 19, 12, 0),
    ("Gelmini", 27, 6, 18, 2),
    ("Cheng", 14, 3, 29, 3),
    ("Cassel", 37, 7, 7, 22),
)


def telomerase_dataset() -> Dataset:
    """Telomerase marker for bladder cancer, 10 studies (Glas et al., 2003)."""
    studies = tuple(StudyRecord(sid, tp=tp, fp=fp, fn_=fn, tn=tn) for sid, tp, fn, tn, fp in _TELOMERASE)
    return Dataset(studies, name="telomerase")
