import pytest

from stvanox.system import cpucount, memory, memory_rss, worker_count


def test_cpucount():
    assert cpucount() >= 1


@pytest.mark.parametrize(
    "requested, jobs, expected",
    [(4, None, 4), (8, 3, 3), (0, None, 1), (-2, 5, 1), (4, 0, 1), (2, 10, 2)],
)
def test_worker_count(requested, jobs, expected):
    assert worker_count(requested, jobs) == expected


def test_worker_count_defaults_to_cores():
    assert worker_count() == cpucount()
    assert worker_count(None, 1) == 1


def test_memory():
    assert memory_rss().endswith("b")
    mem = memory()
    assert mem._fields == ("total", "used", "free", "available")
    assert all(value.endswith("b") for value in mem)
