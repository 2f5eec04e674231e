from geometry.basis import RadialBasis, cutoff_weight, rbf_expand, rbf_init
from geometry.graph import NeighborGraph, build_neighbor_graph, neighbor_pairs
from geometry.molecule import MoleculeBatch, MoleculeConf, as_batch, collate, random_conformation, random_rotation
