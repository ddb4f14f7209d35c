"""Key-value lookups answered by ray casts against a triangle scene.

Keys become geometric primitives on an order-preserving float grid, a
bounding volume hierarchy accelerates the casts, and every lookup reports
deterministic work counters alongside its row ids.
"""

from . import errors
from .backend import get_backend, set_backend
from .baselines import BPlusTreeIndex, HashTableIndex, SortedArrayIndex
from .bvh import Bvh, TraversalCounters
from .costmodel import CostFit, fit_cost_model
from .encoding import (
    Decomposition,
    Mode,
    decode,
    decode_array,
    encode,
    encode_array,
    gap_bounds,
    in_domain,
    max_encodable,
)
from .geometry import PrimitiveSet, Ray
from .harness import (
    CSV_HEADER,
    ExperimentRecord,
    build_named_index,
    fold_checksum,
    run_experiment,
    write_csv,
)
from .index import (
    MISS_ROW_ID,
    LookupResultSet,
    RangeLookup,
    RxIndex,
    build_index,
    load_index,
    plan_point_ray,
    plan_range_rays,
    save_index,
)
from .oracle import point_oracle, range_oracle, results_equal
from .workloads import (
    KeySpec,
    LookupSpec,
    gen_keys,
    gen_lookups,
    load_workload,
    save_workload,
)

__version__ = "0.1.0"

__all__ = [
    "Bvh",
    "BPlusTreeIndex",
    "CostFit",
    "CSV_HEADER",
    "Decomposition",
    "ExperimentRecord",
    "HashTableIndex",
    "KeySpec",
    "LookupResultSet",
    "LookupSpec",
    "MISS_ROW_ID",
    "Mode",
    "PrimitiveSet",
    "RangeLookup",
    "Ray",
    "RxIndex",
    "SortedArrayIndex",
    "TraversalCounters",
    "build_index",
    "build_named_index",
    "decode",
    "decode_array",
    "encode",
    "encode_array",
    "errors",
    "fit_cost_model",
    "fold_checksum",
    "gap_bounds",
    "gen_keys",
    "gen_lookups",
    "get_backend",
    "in_domain",
    "load_index",
    "load_workload",
    "max_encodable",
    "plan_point_ray",
    "plan_range_rays",
    "point_oracle",
    "range_oracle",
    "results_equal",
    "run_experiment",
    "save_index",
    "save_workload",
    "set_backend",
    "write_csv",
]
