from .autodiff import (
    Trace,
    Var,
    FiniteDiffReport,
    record_and_grad,
    finite_diff_check,
    dump_trace_stats,
)

__all__ = [
    "Trace",
    "Var",
    "FiniteDiffReport",
    "record_and_grad",
    "finite_diff_check",
    "dump_trace_stats",
]
