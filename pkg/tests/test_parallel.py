import pytest

from lib.parallel import THREADS_ENV, Job, balanced_chunks, default_threads, parallel_map


def test_balanced_chunks():
    jobs = [Job(i, (), w) for i, w in enumerate([5.0, 4.0, 3.0, 3.0, 1.0])]
    chunks = balanced_chunks(jobs, 2)
    assert sorted(sum(job.weight for job in chunk) for chunk in chunks) == [8.0, 8.0]
    assert sorted(job.index for chunk in chunks for job in chunk) == list(range(5))


@pytest.mark.parametrize("threads", [1, 2])
def test_parallel_map_keeps_order(threads):
    args = [(base, 2) for base in range(7)]
    assert parallel_map(pow, args, threads, weights=[7 - i for i in range(7)]) == [b * b for b in range(7)]


def test_parallel_map_empty():
    assert parallel_map(pow, [], 4) == []


def test_default_threads(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "5")
    assert default_threads() == 5
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ValueError):
        default_threads()
    monkeypatch.delenv(THREADS_ENV)
    assert default_threads() >= 1
