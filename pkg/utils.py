import concurrent.futures
import traceback
import warnings

from config_loader import config


def progress(iterable, total=None, desc=None, enabled=None):
    """
    Wrap an iterable in a tqdm progress bar when progress output is enabled.

    Args:
        iterable: The iterable to wrap.
        total (int, optional): Length hint for the bar.
        desc (str, optional): Bar label.
        enabled (bool, optional): Overrides config.SHOW_PROGRESS.

    Returns:
        iterable: The original iterable or a tqdm wrapper around it.
    """
    if enabled is None:
        enabled = config.SHOW_PROGRESS
    if not enabled:
        return iterable
    from tqdm import tqdm
    return tqdm(iterable, total=total, desc=desc, leave=False)


def parallel_map(fn, items, workers=None, desc=None):
    """
    Apply fn to every item on a thread pool and return the results in input order.

    Args:
        fn (callable): Function of one argument.
        items (iterable): Inputs.
        workers (int, optional): Pool size. Defaults to config.THREADS.
        desc (str, optional): Progress bar label.

    Returns:
        list: fn(item) for every item, in the order of items.
    """
    items = list(items)
    workers = workers or config.THREADS
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in progress(items, total=len(items), desc=desc)]

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        # executor.map keeps input order
        return list(progress(executor.map(fn, items), total=len(items), desc=desc))


def warn(message, verbose=False):
    """Emit a warning; also print it in verbose mode."""
    warnings.warn(message, stacklevel=2)
    if verbose:
        print(f"Warning: {message}")


def report_exception(e, context, verbose=False):
    """Print a caught exception the way every manager does before re-raising it."""
    if verbose:
        traceback.print_exc()
    else:
        print(f"An error occurred {context}: {e}")
