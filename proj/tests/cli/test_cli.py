"""End-to-end checks of the vitac command-line tool: subcommands and exit codes."""
import json
import os
import socket
import subprocess
import sys
import tempfile

VITAC = sys.argv[1]
failures = []


def run(*args, stdin=None, env=None):
    e = dict(os.environ)
    e.pop("VITAC_CONFIG", None)
    e.update(env or {})
    p = subprocess.run([VITAC, *args], input=stdin, capture_output=True, text=True, env=e, timeout=300)
    return p.returncode, p.stdout, p.stderr


def check(name, cond, detail=""):
    print(("ok   " if cond else "FAIL ") + name + ("" if cond else ": " + detail))
    if not cond:
        failures.append(name)


with tempfile.TemporaryDirectory() as tmp:
    log = os.path.join(tmp, "peg.ndjson")
    rc, out, err = run("run-episode", "--task", "peg", "--policy", "oracle", "--seed", "5", "--log", log)
    check("run-episode exits 0", rc == 0, err)
    summary = json.loads(out.strip().splitlines()[-1])
    check("run-episode summary", summary["status"] == "success" and summary["steps"] > 0, out)

    rc, out, _ = run("replay", "--log", log)
    check("replay of an unmodified log", rc == 0 and "no divergence" in out, out)

    lines = open(log).read().splitlines()
    records = [json.loads(l) for l in lines]
    step3 = next(i for i, r in enumerate(records) if r.get("kind") == "step" and r["t"] == 3)
    records[step3]["reward"] += 1.0
    tampered = os.path.join(tmp, "tampered.ndjson")
    open(tampered, "w").write("\n".join(json.dumps(r) for r in records) + "\n")
    rc, out, _ = run("replay", "--log", tampered)
    check("tampered reward exits 4", rc == 4 and "step 3" in out and "reward" in out, out)

    records = [json.loads(l) for l in lines]
    records[0]["config"]["max_steps"] = 51
    other = os.path.join(tmp, "other.ndjson")
    open(other, "w").write("\n".join(json.dumps(r) for r in records) + "\n")
    rc, out, _ = run("replay", "--log", other)
    check("config hash mismatch is refused", rc == 2 and out.startswith("refused"), out)

    png = os.path.join(tmp, "markers.png")
    rc, out, err = run("render-markers", "--log", log, "--step", "2", "--out", png)
    check("render-markers writes a PNG", rc == 0 and open(png, "rb").read(8) == b"\x89PNG\r\n\x1a\n", err)

    rc, out, _ = run("evaluate", "--task", "peg", "--policy", "random", "--episodes", "0")
    check("evaluate with no episodes", rc == 0 and "success_rate" in out, out)

    logs = os.path.join(tmp, "logs")
    summary_path = os.path.join(tmp, "summary.json")
    rc, out, err = run("evaluate", "--task", "peg", "--policy", "oracle", "--episodes", "2", "--seeds", "40",
                       "--log-dir", logs, "--json", summary_path)
    s = json.load(open(summary_path)) if rc == 0 else {}
    check("evaluate writes summary and logs",
          rc == 0 and s.get("episodes") == 2 and len(os.listdir(logs)) == 2, out + err)

    rc, _, err = run("evaluate", "--policy", "td3")
    check("unknown policy exits 2", rc == 2, err)

    cfg = os.path.join(tmp, "bad.toml")
    open(cfg, "w").write("[thresholds]\ntau_xy = -1.0\n")
    rc, _, err = run("run-episode", env={"VITAC_CONFIG": cfg})
    check("invalid config from VITAC_CONFIG exits 2", rc == 2, err)
    open(cfg, "w").write("max_steps = = 3\n")
    rc, _, err = run("serve", "--addr", "stdio", "--config", cfg)
    check("unparsable config exits 2", rc == 2, err)

    good = os.path.join(tmp, "good.toml")
    open(good, "w").write('task = "lock"\nmax_steps = 7\n\n[service]\nmax_sessions = 2\n')
    requests = "\n".join(json.dumps(m) for m in [
        {"type": "hello", "version": "v1"},
        {"type": "step", "action": [0, 0, 0]},
        "not json",
        {"type": "reset", "seed": 7},
        {"type": "reset", "seed": 7},
        {"type": "step", "action": [0, 0, -1]},
        {"type": "close"},
    ]) + "\n"
    rc, out, err = run("serve", "--addr", "stdio", stdin=requests, env={"VITAC_CONFIG": good})
    replies = [json.loads(l) for l in out.splitlines()]
    check("stdio session exits 0", rc == 0, err)
    check("stdio replies", [r["type"] for r in replies] ==
          ["hello-ack", "error", "error", "observation", "observation", "step-result", "closed"], out[:300])
    if len(replies) == 7:
        check("hello-ack lists tasks", replies[0]["tasks"] == ["peg", "lock", "fusion"])
        check("not-reset error", replies[1]["code"] == "not-reset")
        check("config file applies", replies[3]["task"] == "lock")
        check("reset twice is identical", replies[3] == replies[4])
        check("no privileged data by default", "privileged" not in replies[5])

    rc, out, _ = run("serve", "--addr", "stdio", "--privileged", stdin=json.dumps({"type": "reset", "seed": 1}) + "\n")
    check("privileged flag", rc == 0 and "privileged" in json.loads(out.splitlines()[0]), out[:200])

    busy = socket.socket()
    busy.bind(("127.0.0.1", 0))
    busy.listen(1)
    rc, _, err = run("serve", "--addr", "127.0.0.1:%d" % busy.getsockname()[1])
    busy.close()
    check("busy port exits 3", rc == 3 and "port-busy" in err, err)

    mesh = os.path.join(tmp, "gel.mesh")
    spec = os.path.join(tmp, "gel.toml")
    open(spec, "w").write("base_x = 0.02\nbase_y = 0.015\nthickness = 0.003\nsubdivisions = [4, 3, 1]\n")
    rc, out, err = run("gen-gel", "--spec", spec, "--out", mesh)
    check("gen-gel", rc == 0 and "40 vertices" in out and "72 tets" in out, out + err)
    open(spec, "w").write("thickness = -1\n")
    rc, _, err = run("gen-gel", "--spec", spec, "--out", mesh)
    check("gen-gel rejects a bad spec", rc == 2, err)

print("%d failure(s)" % len(failures))
sys.exit(1 if failures else 0)
