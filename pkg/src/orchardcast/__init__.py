"""County-level almond yield modeling from daily gridded climate data.

Pipeline stages: grid ingestion and orchard-mask zonal aggregation
(`grids`), phenology-window features (`phenology`), feature-table assembly
(`dataset`), base learners (`learners`), stacked/bagged ensembling
(`stacking`), benchmark protocol (`evaluate`), and climate-scenario
projection (`projection`). The `orchardcast` CLI chains them end to end.
"""

__version__ = "0.1.0"
