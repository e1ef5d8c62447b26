import os
import tempfile
from pathlib import Path

from partialgait.exceptions import LayoutError


def atomic_write(path, payload):
    """Readers see the old file or the complete new one, never a partial write."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.')
    try:
        with os.fdopen(handle, 'wb') as temp:
            temp.write(payload)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.remove(temp_name)
        raise


def resolve(root, relative):
    """Manifest paths are relative and stay inside the dataset root."""
    relative = Path(relative)
    if relative.is_absolute() or '..' in relative.parts:
        raise LayoutError(f'path {relative} leaves the dataset root', paths=[relative.as_posix()])
    return Path(root) / relative
