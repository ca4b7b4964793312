"""Knowledge-graph materialization from RML mappings over CSV and JSON sources."""

from .engine import (OperatorPlan, OpsPrediction, RunReport, exec_ojm, exec_orm, exec_som,
                     make_plan, merge_sort_count, naive_execute, predicted_ops, run_system)
from .mapping import (DataIntegrationSystem, LogicalSource, MappingError, OperatorKind,
                      PredicateObjectMap, TermMap, TriplesMap, classify_pom, expand_template,
                      load_mapping, parse_mapping, serialize_mapping)
from .sources import Record, SourceError, open_source, project_attributes
from .structures import (CostCounters, Insert, PredicateJoinTupleTable, PredicateTupleTable,
                         pjtt_build, pjtt_probe, ptt_check_insert)
from .terms import Literal, TermError
from .writer import EmissionCursor, KnowledgeGraphCreator, emit_incremental, serialize_ntriples

__version__ = "0.1.0"
