"""Synthetic hybrid trajectories, masking and the on-disk formats."""
from .generators import (
    GenerationError,
    LvSpec,
    SineSpec,
    apply_masking,
    gen_lv,
    gen_sine,
    trajectory_rng,
)
from .trajectory import (
    EXTRAP_HELDOUT,
    FORMAT_VERSION,
    INTERP_HELDOUT,
    VISIBLE,
    Trajectory,
    extract_sdfs,
    read_csv,
    read_dataset,
    read_manifest,
    validate_changepoints,
    write_csv,
    write_dataset,
)
