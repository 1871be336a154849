#!/usr/bin/env python3
"""Capture the native-command differential corpus from a live bash.

Plants a fixed workspace under /tmp/sbashdiff, snapshots it as a filesystem
template, then runs every scripted command sequence through a real bash
(one bash process per sequence, so state persists across the commands of a
sequence and across sequences exactly as the filesystem does). Per command
it records stdout, stderr, and the exit status; the stored transcript is
stdout followed by stderr, the same convention the honeypot uses.

The emitted JSON fixture is self-contained: template lines, planted file
contents, reference identity, and the per-command expected bytes. Replaying
it against the virtual filesystem must reproduce every byte.

Usage: capture_diff.py OUT.json
"""

import json
import os
import shutil
import subprocess
import sys
import time

WS = "/tmp/sbashdiff"

PLANTED = {
    "archive/old.log": "rotated: nothing to see here\n",
    "reports/.keep": "",
    "src/Makefile": "all:\n\tcc -o app app/main.c\n",
    "src/app/main.c": '#include <stdio.h>\nint main(void) {\n    puts("ok");\n    return 0;\n}\n',
    ".hidden": "scratch marker 1337\n",
    "data.csv": "id,host,status\n1,web01,up\n2,web02,down\n",
    "notes.txt": "meeting at 10\nbring the access logs\n",
    "readme.md": "# scratch area\ntemporary working files\n",
}

SEQUENCES = [
    # navigation and listing
    ["cd /tmp/sbashdiff", "pwd", "ls"],
    ["cd /tmp/sbashdiff", "ls -a"],
    ["cd /tmp/sbashdiff/src", "pwd", "ls", "cd app", "pwd", "ls"],
    ["cd /tmp/sbashdiff", "cd ./src/./app", "pwd", "cd ../..", "pwd"],
    ["ls /tmp/sbashdiff/archive"],
    ["ls /tmp/sbashdiff/notes.txt"],
    ["ls /tmp/sbashdiff/src /tmp/sbashdiff/archive"],
    ["ls /tmp/sbashdiff/notes.txt /tmp/sbashdiff/src"],
    ["ls /tmp/sbashdiff/zz_missing /tmp/sbashdiff/aa_missing"],
    ["ls /tmp/sbashdiff/zz_missing /tmp/sbashdiff/src /tmp/sbashdiff/notes.txt"],
    ["ls -a /tmp/sbashdiff/reports"],
    ["cd /tmp/sbashdiff/reports", "ls", "pwd"],
    # reading planted files
    ["cd /tmp/sbashdiff", "cat notes.txt"],
    ["cat /tmp/sbashdiff/notes.txt /tmp/sbashdiff/readme.md"],
    ["cd /tmp/sbashdiff", "cat data.csv", "cat .hidden"],
    ["cd /tmp/sbashdiff/src", "cat Makefile", "cat app/main.c"],
    ["cat /tmp/sbashdiff/missing.txt"],
    ["cd /tmp/sbashdiff", "cat reports"],
    ["cd /tmp/sbashdiff", "cat notes.txt missing.txt readme.md"],
    # mkdir / touch
    ["cd /tmp/sbashdiff", "mkdir w01", "ls", "rm -r w01", "ls"],
    ["cd /tmp/sbashdiff", "mkdir w02", "cd w02", "pwd", "touch a b c", "ls", "ls -a"],
    ["cd /tmp/sbashdiff/w02", "rm a", "ls"],
    ["cd /tmp/sbashdiff", "mkdir w02", "mkdir -p w02", "ls"],
    ["mkdir /tmp/sbashdiff/deep/x/y"],
    ["mkdir -p /tmp/sbashdiff/deep/x/y", "ls /tmp/sbashdiff/deep/x"],
    ["mkdir /tmp/sbashdiff/w02/"],
    ["touch /tmp/sbashdiff/nodir/f"],
    ["cd /tmp/sbashdiff", "touch notes.txt", "ls"],
    ["cd /tmp/sbashdiff", "touch w03file", "ls", "rm w03file"],
    # rm
    ["cd /tmp/sbashdiff", "rm missing1"],
    ["cd /tmp/sbashdiff", "rm -f missing1", "pwd"],
    ["cd /tmp/sbashdiff", "rm src"],
    ["cd /tmp/sbashdiff", "mkdir -p t1/t2/t3", "cd t1/t2/t3", "pwd", "cd ../../..", "pwd", "rm -r t1", "ls"],
    # cp
    ["cd /tmp/sbashdiff", "cp notes.txt copy1.txt", "cat copy1.txt", "ls"],
    ["cd /tmp/sbashdiff", "cp missing2 target"],
    ["cd /tmp/sbashdiff", "cp src srcplain"],
    ["cd /tmp/sbashdiff", "cp -r src srccopy", "ls srccopy", "ls srccopy/app", "cat srccopy/app/main.c"],
    ["cd /tmp/sbashdiff", "cp copy1.txt copy1.txt"],
    ["cd /tmp/sbashdiff", "cp -r archive archive2", "ls archive2", "cat archive2/old.log", "rm -r archive2", "ls"],
    ["cd /tmp/sbashdiff", "cp readme.md copy1.txt", "cat copy1.txt"],
    ["cp /tmp/sbashdiff/data.csv /tmp/sbashdiff/reports", "ls /tmp/sbashdiff/reports"],
    # mv
    ["cd /tmp/sbashdiff", "mkdir mvwork", "mv copy1.txt mvwork", "ls mvwork", "ls"],
    ["cd /tmp/sbashdiff/mvwork", "mv copy1.txt renamed.txt", "ls", "cat renamed.txt"],
    ["cd /tmp/sbashdiff", "mv missing3 somewhere"],
    ["cd /tmp/sbashdiff", "mv mvwork mvwork2", "ls mvwork2"],
    ["cd /tmp/sbashdiff", "mv mvwork2 mvwork2/sub"],
    ["cd /tmp/sbashdiff", "mv srccopy"],
    ["cd /tmp/sbashdiff", "touch over1 over2", "mv over1 over2", "ls over2", "rm over2"],
    ["cd /tmp/sbashdiff", "mv srcplain", "ls srcplain"],
    # echo and identity
    ["echo hello"],
    ["echo hello world test"],
    ["echo 'hello   world'"],
    ['echo "double quoted words"'],
    ["echo -n terse", "echo end"],
    ["echo"],
    ["whoami", "pwd"],
    ["hostname"],
    ["whoami", "hostname", "echo done"],
    # mixed stateful walks
    ["cd /tmp/sbashdiff", "mkdir -p proj/src proj/doc", "cd proj", "ls", "touch doc/guide.txt", "ls doc", "cd ..", "rm -r proj", "ls"],
    ["cd /tmp/sbashdiff/w02", "ls", "cd /tmp/sbashdiff", "ls w02", "rm -r w02", "ls"],
    ["cd /tmp/sbashdiff", "mkdir final", "cd final", "touch report.txt", "cp report.txt report2.txt", "ls", "mv report2.txt archive.txt", "ls", "cd ..", "rm -r final", "ls"],
]


def plant_workspace():
    if os.path.exists(WS):
        shutil.rmtree(WS)
    for rel, content in PLANTED.items():
        path = os.path.join(WS, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w") as f:
            f.write(content)


def capture_template():
    """TSV lines for /, /root, /tmp, and the workspace subtree."""
    specs = ["/:0", "/root:0", "/tmp:0", WS]
    out = subprocess.run(
        [os.path.join(os.path.dirname(__file__), "capture_fs.sh"), *specs],
        capture_output=True,
        text=True,
        check=True,
    )
    # The corpus never renders owners (no long listings); normalize them so
    # capture-host service accounts do not leak into the fixture.
    lines = []
    for line in out.stdout.splitlines():
        fields = line.split("\t")
        if len(fields) == 6:
            fields[4] = "root"
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def run_sequence(commands, home):
    """One bash process per sequence; record each command separately."""
    # IO spool lives outside the workspace so listings never see it.
    tdir = "/tmp/.sbashdiff-io"
    os.makedirs(tdir, exist_ok=True)
    script_lines = ["export LC_ALL=C", f"cd {home}"]
    for i, cmd in enumerate(commands):
        script_lines.append(f"{{ {cmd} ; }} >'{tdir}/out{i}' 2>'{tdir}/err{i}'; echo $? >'{tdir}/rc{i}'")
    script = "\n".join(script_lines) + "\n"

    env = {
        "PATH": "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
        "HOME": home,
        "LC_ALL": "C",
        "SHELL": "/bin/bash",
        "TERM": "xterm",
    }
    subprocess.run(["bash"], input=script, text=True, env=env, check=False, timeout=60)

    records = []
    for i, cmd in enumerate(commands):
        with open(f"{tdir}/out{i}", "rb") as f:
            out = f.read().decode("utf-8", "replace")
        with open(f"{tdir}/err{i}", "rb") as f:
            err = f.read().decode("utf-8", "replace")
        with open(f"{tdir}/rc{i}") as f:
            rc = int(f.read().strip())
        records.append({"cmd": cmd, "output": out + err, "exit": rc})
    shutil.rmtree(tdir)
    return records


def sh(cmd):
    return subprocess.run(["bash", "-c", cmd], capture_output=True, text=True).stdout.strip()


def main():
    if len(sys.argv) != 2:
        print(__doc__, file=sys.stderr)
        sys.exit(1)
    out_path = sys.argv[1]
    home = os.environ.get("HOME", "/root")

    plant_workspace()
    template = capture_template()

    sequences = []
    for n, commands in enumerate(SEQUENCES, 1):
        records = run_sequence(commands, home)
        sequences.append({"name": f"seq{n:03}", "commands": records})

    fixture = {
        "version": 1,
        "reference": {
            "host": "local",
            "os": sh('. /etc/os-release 2>/dev/null && echo "$PRETTY_NAME"'),
            "bash": sh("bash --version | head -1"),
            "hostname": sh("hostname"),
            "user": sh("whoami"),
            "home": home,
            "captured_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        },
        "workspace": WS,
        "template": template,
        "contents": {f"{WS}/{rel}": content for rel, content in PLANTED.items()},
        "sequences": sequences,
    }

    shutil.rmtree(WS, ignore_errors=True)
    with open(out_path, "w") as f:
        json.dump(fixture, f, indent=1)
        f.write("\n")
    total = sum(len(s["commands"]) for s in sequences)
    print(f"captured {len(sequences)} sequences / {total} commands -> {out_path}", file=sys.stderr)


if __name__ == "__main__":
    main()
