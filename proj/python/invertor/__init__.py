"""Blockwise (Schur complement) dense matrix inversion."""

from ._invertor import (
    AllPivotsSingular,
    CheckpointCorrupt,
    DimensionMismatch,
    Error,
    InsufficientData,
    InvalidOrder,
    SchemeMismatch,
    SingularBlock,
    SingularMatrix,
    bench,
    decode_step,
    fit_slope,
    gauss_jordan_oracle,
    generate,
    invert,
    invert_recursive,
    invert_with_fallback,
    loopid_for_step,
    make_partition,
    residual_norm,
    resume,
    run_inversion,
    step_count,
    updown_iteration_map,
)

__all__ = [name for name in dir() if not name.startswith("_")]
