# Copyright 2026 The stochvort Developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Ordered execution of independent work items.

Ensemble members and Monte Carlo samples are independent of each other, so
they can be farmed out to a process pool. Results come back in submission
order, so any reduction over them runs in a fixed order whatever the number
of workers.
"""

import multiprocessing
from typing import Any, Callable, Iterable, List, Sequence

# Worker count for the FFTs inside a single trajectory. Must stay fixed
# for results to be bitwise reproducible.
FFT_WORKERS = 1


def execute_in_pool(func: Callable[..., Any],
                    arg_tuples: Iterable[Sequence[Any]],
                    num_workers: int = 1) -> List[Any]:
    """Call ``func(*args)`` for every entry of ``arg_tuples``.

    Args:
        func: A picklable (module-level) function.
        arg_tuples: Positional arguments for each call.
        num_workers: The number of processes. With one worker everything
            runs inline in the calling process.

    Returns:
        The results in the order of ``arg_tuples``.
    """
    if num_workers < 1:
        raise ValueError("num_workers must be at least 1, not {}"
                         .format(num_workers))
    arg_tuples = [tuple(args) for args in arg_tuples]
    if num_workers == 1 or len(arg_tuples) <= 1:
        return [func(*args) for args in arg_tuples]

    with multiprocessing.Pool(min(num_workers, len(arg_tuples))) as pool:
        return pool.starmap(func, arg_tuples)


def execute_tasks(func: Callable[[Any], Any],
                  tasks: Iterable[Any],
                  num_workers: int = 1) -> List[Any]:
    """Run a task function over a list of experiment tasks.

    Mirrors the data collection idiom of running each task and printing
    its progress; tasks themselves decide whether they are already done.
    """
    tasks = list(tasks)
    print(f"Running {len(tasks)} tasks on {num_workers} worker(s).")
    results = execute_in_pool(func, [(task,) for task in tasks], num_workers)
    print("All tasks completed.")
    return results

