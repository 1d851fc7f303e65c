import json

import numpy as np
import pytest

from strokeboard.quickdraw import QuickDrawError, load_quickdraw

APPLE_LINE = json.dumps(
    {
        "word": "apple",
        "countrycode": "US",
        "recognized": True,
        "drawing": [
            [[20, 40, 80, 120, 200, 235], [100, 40, 10, 12, 60, 130]],
            [[235, 200, 120, 60, 20], [130, 220, 250, 230, 110]],
            [[128, 120, 140], [10, 0, 5]],
        ],
    }
)


def test_two_point_diagonal_maps_to_margin_box():
    line = json.dumps({"drawing": [[[0, 255], [0, 255]]]})
    sk = load_quickdraw(line, 600, 600, margin=0.1)
    assert len(sk.strokes) == 1
    pts = sk.strokes[0].points
    assert np.allclose(pts[0], [60.0, 60.0], atol=1e-9)
    assert np.allclose(pts[-1], [540.0, 540.0], atol=1e-9)
    assert not sk.strokes[0].trainable


def test_empty_drawing_is_empty_sketch():
    sk = load_quickdraw(json.dumps({"drawing": []}), 600, 600)
    assert len(sk.strokes) == 0


def test_stroke_count_matches_drawing_arrays():
    expected = len(json.loads(APPLE_LINE)["drawing"])
    sk = load_quickdraw(APPLE_LINE, 600, 600)
    assert len(sk.strokes) == expected


def test_malformed_json_names_byte_offset():
    with pytest.raises(QuickDrawError) as exc:
        load_quickdraw('{"drawing": [[[0,1],[0,', 600, 600)
    assert "byte offset" in str(exc.value)


def test_missing_drawing_key_is_schema_error():
    with pytest.raises(QuickDrawError) as exc:
        load_quickdraw('{"word": "apple"}', 600, 600)
    assert "drawing" in str(exc.value)


def test_output_lies_inside_margin_box():
    sk = load_quickdraw(APPLE_LINE, 600, 400, margin=0.1)
    side = 0.8 * 400
    lo_x = (600 - side) / 2
    lo_y = (400 - side) / 2
    for s in sk.strokes:
        assert np.all(s.points[:, 0] >= lo_x - 1e-9)
        assert np.all(s.points[:, 0] <= lo_x + side + 1e-9)
        assert np.all(s.points[:, 1] >= lo_y - 1e-9)
        assert np.all(s.points[:, 1] <= lo_y + side + 1e-9)


def test_aspect_ratio_preserved_on_non_square_canvas():
    line = json.dumps({"drawing": [[[0, 255], [0, 255]]]})
    sk = load_quickdraw(line, 800, 600, margin=0.0)
    pts = sk.strokes[0].points
    span = pts[-1] - pts[0]
    assert abs(span[0] - span[1]) < 1e-9  # square source stays square


def test_single_point_stroke_becomes_dot():
    line = json.dumps({"drawing": [[[128], [128]]]})
    sk = load_quickdraw(line, 600, 600)
    assert len(sk.strokes) == 1
    assert sk.strokes[0].num_segments == 1


def test_bad_margin_rejected():
    with pytest.raises(QuickDrawError):
        load_quickdraw(APPLE_LINE, 600, 600, margin=0.5)
