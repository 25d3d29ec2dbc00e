import argparse
import importlib.util
import os
import shutil

REPO_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _load(path):
    spec = importlib.util.spec_from_file_location("lobe_config_snapshot", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return {key: value for key, value in vars(module).items() if key.isupper()}


def overridden_keys(default_path, user_path):
    """Keys whose value in config.py differs from the default (these are lost on rebuild)."""
    if not os.path.exists(user_path):
        return {}
    defaults, user = _load(default_path), _load(user_path)
    return {key: value for key, value in user.items() if key in defaults and defaults[key] != value}


def main():
    parser = argparse.ArgumentParser(description="Replace config.py with the latest config_default.py")
    parser.add_argument("--yes", action="store_true", help="do not ask for confirmation")
    args = parser.parse_args()

    default_path = os.path.join(REPO_DIR, "config_default.py")
    user_path = os.path.join(REPO_DIR, "config.py")

    lost = overridden_keys(default_path, user_path)
    for key, value in sorted(lost.items()):
        print(f"  {key} = {value!r} (will be reset)")

    if not args.yes:
        answer = input("This replaces config.py with config_default.py. Continue? (yes/no): ")
        if answer.strip().lower() not in ("yes", "y"):
            print("Operation cancelled by the user.")
            return

    try:
        shutil.copyfile(default_path, user_path)
    except OSError as e:
        print(f"Could not write {user_path}: {e}")
        return
    print(f"config.py rebuilt from config_default.py ({len(lost)} customized values reset)")


if __name__ == "__main__":
    main()
