"""Pinch grasp synthesis and fingertip contact-plane design."""

from ._core import (
    DegenerateError,
    DimensionError,
    Error,
    GraspCandidate,
    HandModel,
    ObjectShape,
    ParseError,
    Plane,
    SynthesisOptions,
    __version__,
    cover_planes,
    e_precise,
    evaluate_grasp,
    fingertip_jacobian,
    forward_kinematics,
    generate_cover,
    load_hand,
    load_object,
    optimize_plane,
    parse_hand,
    run_cli,
    sdf,
    surrogate_score,
    synthesize_grasp,
    tip_samples,
)

__all__ = [
    "DegenerateError",
    "DimensionError",
    "Error",
    "GraspCandidate",
    "HandModel",
    "ObjectShape",
    "ParseError",
    "Plane",
    "SynthesisOptions",
    "__version__",
    "cover_planes",
    "e_precise",
    "evaluate_grasp",
    "fingertip_jacobian",
    "forward_kinematics",
    "generate_cover",
    "load_hand",
    "load_object",
    "optimize_plane",
    "parse_hand",
    "run_cli",
    "sdf",
    "surrogate_score",
    "synthesize_grasp",
    "tip_samples",
]
