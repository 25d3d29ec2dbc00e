import os
import importlib.util
from dotenv import load_dotenv

NEW_KEYS_HEADER = "# New configuration items\n"


class ConfigLoader:
    """
    Config class to load and merge default and user-specific configuration settings.

    The defaults come from `config_default.py`. If a `config.py` sits next to it, its
    values override the defaults. Keys that exist in the defaults but not in the user's
    file are written to a "New configuration items" block at the top of `config.py` so the
    file stays complete across upgrades.

    Environment overrides are applied last; `.env` files are honoured through
    python-dotenv:
        LOBE_THREADS  caps the number of worker threads

    Usage:
        from config_loader import config

        print(config.TAU)
        print(config.THREADS)
    """

    def __init__(self, config_dir=None):
        script_dir = config_dir or os.path.dirname(os.path.abspath(__file__))
        default_config_path = os.path.join(script_dir, 'config_default.py')
        user_config_path = os.path.join(script_dir, 'config.py')

        default_config = self._import_config(default_config_path)
        user_config = None

        if os.path.exists(user_config_path):
            user_config = self._import_config(user_config_path)

            new_keys = set(self._public_keys(default_config)) - set(self._public_keys(user_config))
            if new_keys:
                self._append_new_keys(user_config_path, default_config, sorted(new_keys))
                user_config = self._import_config(user_config_path)

        for key in self._public_keys(default_config):
            value = getattr(default_config, key)
            if user_config is not None:
                value = getattr(user_config, key, value)
            setattr(self, key, value)

        load_dotenv()
        self._apply_env_overrides()

    def _public_keys(self, module):
        return [key for key in module.__dict__ if key.isupper()]

    def _import_config(self, config_path):
        spec = importlib.util.spec_from_file_location("lobe_config", config_path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        return module

    def _apply_env_overrides(self):
        raw = os.getenv('LOBE_THREADS')
        if raw is not None and raw.strip() != "":
            try:
                threads = int(raw)
            except ValueError:
                raise ValueError(f"LOBE_THREADS must be a positive integer, got {raw!r}")
            if threads < 1:
                raise ValueError(f"LOBE_THREADS must be a positive integer, got {raw!r}")
            self.THREADS = threads
        if not self.THREADS:
            self.THREADS = os.cpu_count() or 1

    def _append_new_keys(self, config_path, default_config, new_keys):
        """Defaults missing from config.py go into one block at its top, extended on later upgrades."""
        with open(config_path, 'r') as f:
            lines = f.read().splitlines(keepends=True)
        added = [f'{key} = {getattr(default_config, key)!r}\n' for key in new_keys]
        if lines and lines[0] == NEW_KEYS_HEADER:
            lines[1:1] = added
        else:
            lines[0:0] = [NEW_KEYS_HEADER, *added, '\n']
        with open(config_path, 'w') as f:
            f.writelines(lines)


# Create a global config object
config = ConfigLoader()

if __name__ == "__main__":
    print(config.TAU)
    print(config.THREADS)
    print(config.CAMERA_SELECTOR)
