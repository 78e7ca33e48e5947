"""Station-driven global air pollution estimation.

Ingest and clean monitoring-station series, assemble covariate feature
vectors, train histogram gradient-boosted trees (point and quantile),
evaluate spatial generalisation and render gridded concentration / index
products.
"""

__version__ = "0.1.0"

POLLUTANTS = ("NO2", "O3", "PM10", "PM2_5", "SO2")
CONTINENTS = (
    "Asia",
    "Australia",
    "SouthAmerica",
    "Africa",
    "Europe",
    "NorthAmerica",
    "Oceania",
)
