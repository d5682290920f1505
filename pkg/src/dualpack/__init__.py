"""Pack the parts of a 3D object into two volumes whose parts never touch,
and produce signed-distance training samples for each volume."""

from .contact import ContactGraph, build_contact_graph
from .contraction import (ContractionPlan, apply_contractions, contract_to_bipartite,
                          enumerate_simple_cycles, fallback_two_coloring,
                          greedy_odd_cycle_contraction, two_coloring)
from .curation import CurationReport, dataset_stats, filter_object
from .field import SdfGrid, compute_sdf_grid, marching_cubes
from .mesh_io import SceneObject, TriangleMesh, load_object
from .packing import VolumeAssignment, assign_volumes
from .parts import PartSet, extract_parts, merge_rules, repair_parts
from .pipeline import PipelineConfig, run_batch, run_pack

__version__ = "0.1.0"
