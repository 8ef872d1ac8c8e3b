"""Writes the GeoTIFF reader fixtures with tifffile and records the expected
fields in geotiff_fixtures.json. Re-run after changing anything here."""
import json
import numpy as np
import tifffile

rng = np.random.default_rng(7)
expected = {}


def geotags(scale, tie_ij, tie_xy, epsg, pixel_is_point=False):
    keys = [1, 1, 0, 2, 1024, 0, 1, 1, 1025, 0, 1, 2 if pixel_is_point else 1]
    keys[3] = 3
    keys += [3072, 0, 1, epsg]
    return [
        (33550, 'd', 3, (scale, scale, 0.0), True),
        (33922, 'd', 6, (tie_ij[0], tie_ij[1], 0.0, tie_xy[0], tie_xy[1], 0.0), True),
        (34735, 'H', len(keys), tuple(keys), True),
    ]


def write(name, data, byteorder, scale, tie_ij, tie_xy, epsg, nodata=None, pixel_is_point=False, **kw):
    tags = geotags(scale, tie_ij, tie_xy, epsg, pixel_is_point)
    if nodata is not None:
        tags.append((42113, 's', 0, str(nodata), True))
    tifffile.imwrite(name, data, byteorder=byteorder, extratags=tags, photometric='minisblack', metadata=None, **kw)
    if data.ndim == 2 and data.dtype == np.float32 and 'compression' not in kw:
        off_x = tie_xy[0] - tie_ij[0] * scale
        off_y = tie_xy[1] + tie_ij[1] * scale
        if pixel_is_point:
            off_x -= scale / 2
            off_y += scale / 2
        valid = np.isfinite(data)
        if nodata is not None:
            valid &= data != np.float32(nodata)
        expected[name] = {
            'rows': int(data.shape[0]), 'cols': int(data.shape[1]),
            'origin_easting': off_x, 'origin_northing': off_y,
            'pixel_size': scale, 'crs_id': epsg,
            'depth': [float(v) if np.isfinite(v) else None for v in data.ravel()],
            'valid': [int(v) for v in valid.ravel()],
        }


a = (rng.random((7, 5)) * 40 + 10).astype(np.float32)
a[2, 3] = -9999.0
write('strip_le.tif', a, '<', 2.5, (0, 0), (500000.0, 4800000.0), 32617, nodata=-9999, rowsperstrip=3)

b = (rng.random((20, 37)) * 5 + 100).astype(np.float32)
b[0, 0] = np.nan
write('tiled_be.tif', b, '>', 0.5, (0, 0), (312000.25, 5012000.75), 29902, tile=(16, 16))

c = (rng.random((9, 4)) * 3 + 50).astype(np.float32)
write('point_be_strip.tif', c, '>', 10.0, (2, 3), (600020.0, 4000000.0), 32633, pixel_is_point=True)

write('deflate.tif', a, '<', 2.5, (0, 0), (0.0, 0.0), 32617, compression='zlib')
write('two_band.tif', np.stack([a, a], axis=-1), '<', 2.5, (0, 0), (0.0, 0.0), 32617, planarconfig='contig')
write('int16.tif', a.astype(np.int16), '<', 2.5, (0, 0), (0.0, 0.0), 32617)

with open('geotiff_fixtures.json', 'w') as f:
    json.dump(expected, f, indent=1)
