import numpy as np
import pytest

from metaimpute.data.episodes import make_meta_test_suite
from metaimpute.data.manifest import MANIFEST_HEADER, read_manifest, write_manifest
from metaimpute.exceptions import ParseError
from metaimpute.testing import fake_episode


@pytest.fixture
def manifest_path(tmp_path):
    return tmp_path / "manifest.txt"


def test_manifest_reloads_bit_exact(manifest_path, block):
    suite = make_meta_test_suite(block, count=3, n_rows=4, n_cols=5, rng=np.random.default_rng(0))
    write_manifest(manifest_path, suite, norm_mean=3.52986, norm_std=1.125)
    manifest = read_manifest(manifest_path)
    assert manifest.norm_mean == 3.52986
    assert manifest.norm_std == 1.125
    assert len(manifest.episodes) == 3
    for original, loaded in zip(suite, manifest.episodes):
        for name in ("X", "B", "Xp", "Bp"):
            np.testing.assert_array_equal(getattr(loaded, name), getattr(original, name))


def test_manifest_layout(manifest_path):
    write_manifest(manifest_path, [fake_episode(2, 2, density=1.0, seed=0)])
    lines = manifest_path.read_text().splitlines()
    assert lines[0] == MANIFEST_HEADER
    assert lines[1:4] == ["norm-mean=0", "norm-std=1", "episodes=1"]
    assert lines[4] == "episode 0 2 2"
    assert [line.split("\t")[3] for line in lines[5:]] == ["train", "train", "test", "test"]


def write_lines(path, *lines):
    path.write_text("\n".join((MANIFEST_HEADER,) + lines) + "\n")


@pytest.mark.parametrize(
    "lines,line_number",
    [
        (("episodes=1", "0\t0\t1.0\ttrain"), 3),
        (("episodes=1", "episode 0 2 2", "0\t0\t1.0\tvalid"), 4),
        (("episodes=1", "episode 0 2 2", "0\t0\t1.0"), 4),
        (("episodes=1", "episode 0 2 2", "5\t0\t1.0\ttrain"), 4),
        (("episodes=1", "episode 0 2 2", "0\t0\t1.0\ttrain", "0\t0\t1.0\ttest"), 5),
        (("episodes=2", "episode 1 2 2"), 3),
        (("colour=blue",), 2),
        (("episode 0 two 2",), 2),
    ],
)
def test_read_manifest_errors(manifest_path, lines, line_number):
    write_lines(manifest_path, *lines)
    with pytest.raises(ParseError) as excinfo:
        read_manifest(manifest_path)
    assert excinfo.value.line_number == line_number


def test_read_manifest_missing_header(manifest_path):
    manifest_path.write_text("episodes=1\n")
    with pytest.raises(ParseError, match="header"):
        read_manifest(manifest_path)


def test_read_manifest_episode_count(manifest_path):
    write_lines(manifest_path, "episodes=2", "episode 0 1 2", "0\t0\t1\ttrain", "0\t1\t2\ttest")
    with pytest.raises(ParseError, match="expected 2 episodes"):
        read_manifest(manifest_path)


def test_read_manifest_no_episodes(manifest_path):
    write_lines(manifest_path, "norm-mean=0")
    with pytest.raises(ParseError, match="no episodes"):
        read_manifest(manifest_path)
