"""Clustering items from sparse, noisy pairwise measurements."""

from pairclust.bethe_hessian import BetheHessian, bh_cluster, build_H, correspondence_check, negative_eigenpairs
from pairclust.bp import BeliefPropagation, BpReport, BpSettings, bp_cluster, bp_run, bp_sweep, decode_marginals
from pairclust.clustering import ClusterResult, KMeansSettings, kmeans, overlap, sign_decode
from pairclust.densities import BinnedDensity, DiscreteDensity, GaussianDensity, censored_pair
from pairclust.estimation import PointDataset, build_graph_from_points, cluster_points, kde_estimate
from pairclust.graph import MeasurementGraph, PlantedInstance, sample_instance
from pairclust.model import ModelParams, censored_model, critical_degree, gaussian_model, weight
from pairclust.nonbacktracking import NbOperator, SpectralSettings, c_matvec, nb_cluster, nb_leading_spectrum

__version__ = "0.1.0"

__all__ = [
    "BeliefPropagation",
    "BetheHessian",
    "BinnedDensity",
    "BpReport",
    "BpSettings",
    "ClusterResult",
    "DiscreteDensity",
    "GaussianDensity",
    "KMeansSettings",
    "MeasurementGraph",
    "ModelParams",
    "NbOperator",
    "PlantedInstance",
    "PointDataset",
    "SpectralSettings",
    "bh_cluster",
    "bp_cluster",
    "bp_run",
    "bp_sweep",
    "build_H",
    "build_graph_from_points",
    "c_matvec",
    "censored_model",
    "censored_pair",
    "cluster_points",
    "correspondence_check",
    "critical_degree",
    "decode_marginals",
    "gaussian_model",
    "kde_estimate",
    "kmeans",
    "nb_cluster",
    "nb_leading_spectrum",
    "negative_eigenpairs",
    "overlap",
    "sample_instance",
    "sign_decode",
    "weight",
]
