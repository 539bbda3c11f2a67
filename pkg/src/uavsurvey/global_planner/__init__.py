from .milestones import (UNSAFE, UNVISITED, VISITED, KMedoidsResult, Milestone, SafeSample,
                         estimate_milestone_count, kmedoids, order_milestones, sample_safe_cells)
from .roadmap import Roadmap, build_prm
from .search import AdjacencyGraph, GridGraph, SearchResult, astar, revisit_penalty, turn_feasible
from .tour import GlobalPath, PlannerConfig, plan_tour

__all__ = [
    "UNSAFE", "UNVISITED", "VISITED", "KMedoidsResult", "Milestone", "SafeSample", "estimate_milestone_count",
    "kmedoids", "order_milestones", "sample_safe_cells", "Roadmap", "build_prm", "AdjacencyGraph", "GridGraph",
    "SearchResult", "astar", "revisit_penalty", "turn_feasible", "GlobalPath", "PlannerConfig", "plan_tour",
]
