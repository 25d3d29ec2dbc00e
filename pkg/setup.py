import argparse
import os
import shutil
import subprocess
import sys

VENV_DIR = "venv"
REQUIRED_MODULES = ("numpy", "scipy", "plyfile", "dotenv", "tqdm")


def venv_python():
    if sys.platform == "win32":
        return os.path.join(VENV_DIR, "Scripts", "python")
    return os.path.join(VENV_DIR, "bin", "python3")


def ask(question, assume_yes):
    if assume_yes:
        return True
    return input(f"[?] {question} (y/n): ").strip().lower() == "y"


def prepare_venv(assume_yes):
    if os.path.isdir(VENV_DIR):
        if assume_yes or not ask("A virtual environment already exists. Recreate it?", False):
            print("[!] Using existing virtual environment.")
            return
        print("[!] Removing existing virtual environment...")
        shutil.rmtree(VENV_DIR)
    subprocess.run([sys.executable, "-m", "venv", VENV_DIR], check=True)
    print("[+] Virtual environment created.")


def pip_install(requirements_file):
    path = os.path.join("requirements", requirements_file)
    try:
        subprocess.check_call([venv_python(), "-m", "pip", "install", "-r", path])
    except subprocess.CalledProcessError as e:
        print(f"[-] pip failed on {path}: {e}")
        sys.exit(1)
    print(f"[+] Installed {path}")


def check_imports():
    """Import the numeric stack inside the venv so a broken wheel shows up now, not mid-partition."""
    script = "; ".join(f"import {name}" for name in REQUIRED_MODULES)
    result = subprocess.run([venv_python(), "-c", script], capture_output=True, text=True)
    if result.returncode != 0:
        print(f"[-] The virtual environment cannot import the runtime stack:\n{result.stderr.strip()}")
        sys.exit(1)
    print("[+] Runtime stack imports cleanly.")


def install_file(src, dest, assume_yes):
    if os.path.exists(dest) and not ask(f"{dest} already exists. Overwrite it?", assume_yes):
        print(f"[!] Keeping the existing {dest}")
        return
    shutil.copy(src, dest)
    print(f"[+] {src} -> {dest}")


def write_launcher():
    if sys.platform == "win32":
        name, lines = "run_lobe.bat", ['@echo off', 'cd /d "%~dp0"', r'call venv\Scripts\activate.bat',
                                       'python main.py %*']
    else:
        name, lines = "run_lobe.sh", ['#!/bin/bash', 'cd "$(dirname "$0")"', 'source venv/bin/activate',
                                      'python3 main.py "$@"']
    with open(name, "w") as f:
        f.write("\n".join(lines) + "\n")
    if not name.endswith(".bat"):
        os.chmod(name, 0o755)
    print(f"[+] Created {name}; try `{name} gen-scene --out-scene scene.ply --out-cams cams`")


def main(argv=None):
    parser = argparse.ArgumentParser(description="Install Lobe into a local virtual environment")
    parser.add_argument("--yes", action="store_true", help="answer yes to every prompt (never recreates the venv)")
    parser.add_argument("--tests", action="store_true", help="also install pytest and hypothesis")
    args = parser.parse_args(argv)

    print("===== Lobe Setup =====")
    prepare_venv(args.yes)
    pip_install("requirements.txt")
    if args.tests or ask("Install the test dependencies (pytest, hypothesis)?", args.yes):
        pip_install("test_requirements.txt")
    check_imports()

    install_file("config_default.py", "config.py", args.yes)
    install_file(".env.example", ".env", args.yes)
    print("[!] Set LOBE_THREADS in .env to cap the worker threads")
    write_launcher()
    print("===== Setup Complete =====")


if __name__ == "__main__":
    main()
