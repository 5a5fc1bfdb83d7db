import numpy as np
import pytest

from sdmkit.geodata import ObservationRecord, ObservationTable, RasterLayer


@pytest.fixture
def toy_raster():
    """4x4 grid holding 0..15 row-major; origin (0,4), 1-degree pixels, north-up."""
    return RasterLayer(
        name="toy",
        width=4,
        height=4,
        origin_x=0.0,
        origin_y=4.0,
        pixel_size_x=1.0,
        pixel_size_y=-1.0,
        crs="EPSG:4326",
        nodata=-9999.0,
        values=np.arange(16, dtype=np.float32).reshape(4, 4),
    )


def make_table(points, num_classes=5):
    records = tuple(
        ObservationRecord(f"s{i}", lon, lat, frozenset(species))
        for i, (lon, lat, species) in enumerate(points)
    )
    return ObservationTable(records=records, num_classes=num_classes)
