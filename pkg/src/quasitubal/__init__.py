"""Tubal and quasitubal tensor algebra: transforms, eventually-constant tubes,
banded-plus-tail tensors, q-SVD, optimal truncations and streaming extraction."""
from .decomp import (
    Component,
    ComponentList,
    InfiniteCandidateError,
    NotInHError,
    QSvd,
    RankRangeError,
    TSvd,
    implicit_rank,
    multirank,
    order_components,
    qrank,
    qsvd,
    rank_f,
    truncate_explicit,
    truncate_multirank,
    truncate_qrank,
    tsvd_finite,
    tsvd_truncate,
)
from .io import QttFormatError, read_components_csv, read_qtt, write_components_csv, write_qtt
from .quasitube import NOT_IN_H, EcSeq
from .stream import ExtractionReport, SliceOracle, certify_band, extract_top_q
from .synth import SynthSpec, synthesize
from .tensor import (
    FiniteTubalTensor,
    QtTensor,
    finite_to_qt,
    finite_tprod,
    qt_h_norm,
    qt_identity,
    qt_op_norm,
    qt_prod,
    qt_zeros,
)
from .transform import TransformSpec

__version__ = "0.1.0"
