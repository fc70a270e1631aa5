"""Semi-blind tomography of unitary quantum processes.

Pure-state tomography of each measured state, relative phase recovery
between estimated input/output pairs, and a unitarity-constrained total
least squares fit, plus identifiability checks and a simulation harness.
"""

__version__ = "0.1.0"

from .identifiability import (
    IdentifiabilityReport,
    build_counterexample,
    check_commutant,
    check_nsc,
    check_sufficient,
    f_s_closure,
)
from .linalg import error_metric, fidelity, nearest_unitary, random_unitary, tensor_product
from .measurement import (
    CountsFile,
    CountsRecord,
    MeasurementSet,
    custom_measurement_set,
    default_measurement_set,
    read_counts_file,
    write_counts_file,
)
from .qpt import (
    IdentifiabilityFailure,
    QptResult,
    assemble_problem,
    qpt_pipeline,
    recover_phases,
    solve_unitary_tls,
    sqpt_pipeline,
)
from .qst import QstEstimate, qst_batch, qst_estimate

__all__ = [
    "CountsFile",
    "CountsRecord",
    "IdentifiabilityFailure",
    "IdentifiabilityReport",
    "MeasurementSet",
    "QptResult",
    "QstEstimate",
    "__version__",
    "assemble_problem",
    "build_counterexample",
    "check_commutant",
    "check_nsc",
    "check_sufficient",
    "custom_measurement_set",
    "default_measurement_set",
    "error_metric",
    "f_s_closure",
    "fidelity",
    "nearest_unitary",
    "qpt_pipeline",
    "qst_batch",
    "qst_estimate",
    "random_unitary",
    "read_counts_file",
    "recover_phases",
    "solve_unitary_tls",
    "sqpt_pipeline",
    "tensor_product",
    "write_counts_file",
]
