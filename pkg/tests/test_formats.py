import pytest

from metaimpute.data.formats import load_triplets, parse_id, parse_line, write_triplets
from metaimpute.exceptions import ContractError, ParseError


@pytest.mark.parametrize(
    "line,fmt,expected",
    [
        ("196\t242\t3\t881250949", "movielens_tab", (196, 242, 3.0)),
        ("1::1193::5::978300760", "movielens_dcolon", (1, 1193, 5.0)),
        ("u1,i9,4.5", "csv", ("u1", "i9", 4.5)),
        ("-3,7,-0.25", "csv", (-3, 7, -0.25)),
    ],
)
def test_parse_line(line, fmt, expected):
    assert parse_line(line, fmt) == expected


@pytest.mark.parametrize(
    "line,fmt",
    [
        ("1\t2\t3", "movielens_tab"),
        ("1\t2\tfive\t0", "movielens_tab"),
        ("1::2::3", "movielens_dcolon"),
        ("1,2", "csv"),
        ("1,2,nan", "csv"),
        ("1,2,inf", "csv"),
        (",2,3", "csv"),
    ],
)
def test_parse_line_rejects(line, fmt):
    with pytest.raises(ValueError):
        parse_line(line, fmt)


def test_parse_id():
    assert parse_id(" 12 ") == 12
    assert parse_id("abc") == "abc"


def test_load_triplets(tmp_path):
    path = tmp_path / "u.data"
    path.write_text("1\t10\t4\t100\n\n2\t10\t5\t101\n1\t11\t3\t102\n")
    assert load_triplets(path) == [(1, 10, 4.0), (2, 10, 5.0), (1, 11, 3.0)]


def test_load_triplets_csv_header(tmp_path):
    path = tmp_path / "ratings.csv"
    path.write_text("user,item,rating\na,b,1.5\n")
    assert load_triplets(path, "csv") == [("a", "b", 1.5)]


def test_load_triplets_reports_line_number(tmp_path):
    path = tmp_path / "u.data"
    path.write_text("1\t10\t4\t100\n2\t10\t5\n")
    with pytest.raises(ParseError) as excinfo:
        load_triplets(path)
    assert excinfo.value.line_number == 2
    assert str(excinfo.value).startswith(f"{path}:2: ")


def test_load_triplets_rejects_invalid_utf8(tmp_path):
    path = tmp_path / "ratings.csv"
    # two ids that differ only in undecodable bytes must not collapse into one
    path.write_bytes(b"a\xff,b,1\na\xfe,b,2\n")
    with pytest.raises(ParseError, match="invalid UTF-8") as excinfo:
        load_triplets(path, "csv")
    assert excinfo.value.line_number == 1


def test_load_triplets_header_only_on_first_line(tmp_path):
    path = tmp_path / "ratings.csv"
    path.write_text("a,b,1\nuser,item,rating\n")
    with pytest.raises(ParseError) as excinfo:
        load_triplets(path, "csv")
    assert excinfo.value.line_number == 2


def test_load_triplets_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("\n\n")
    with pytest.raises(ParseError, match="no ratings"):
        load_triplets(path, "csv")


def test_load_triplets_unknown_format(tmp_path):
    with pytest.raises(ContractError):
        load_triplets(tmp_path / "x", "json")  # type: ignore[arg-type]


def test_write_triplets_keeps_precision(tmp_path):
    path = tmp_path / "block.csv"
    triplets = [(1, "b", 0.1), ("a", 2, -1.0 / 3.0)]
    assert write_triplets(path, triplets) == 2
    assert load_triplets(path, "csv") == triplets
