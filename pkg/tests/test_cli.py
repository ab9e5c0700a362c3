"""Command-line interface: exit codes, golden values, byte stability."""

import json
import math

import pytest

from relaycap import cli
from relaycap.errors import ConfigError

# Exp(1), prelog 1/2 closed forms (see test_capacity.py)
ORA_EXP1 = 0.43017369113544296
OPRA_EXP1 = 0.5142694626797389
OPRA_CUTOFF_EXP1 = 0.39377384504511836
EFFECTIVE_EXP1_D1 = 0.38760796109766565

TINY = {
    "description": "single Rayleigh-power hop, three policies",
    "topology": {"kind": "serial", "hops": [{"family": "exponential"}]},
    "policies": [
        {"name": "ora"},
        {"name": "opra"},
        {"name": "effective", "qos_delta": 1.0},
    ],
    "snr_grid_db": [0.0, 10.0],
    "taus": [0.5, 1.0, 2.0],
    "mc": {"samples": 50000, "seed": 11, "snr_db": [0.0]},
}

MARGINAL = {
    "topology": {
        "kind": "selective",
        "formula": "marginal_product",
        "branches": [[{"family": "exponential"}, {"family": "exponential"}]],
    },
    "policies": [{"name": "ora"}],
    "snr_grid_db": [0.0],
    "taus": [1.0],
    "mc": {"samples": 200000, "seed": 3, "snr_db": [0.0]},
}

GRIDFAIL = {
    "topology": {
        "kind": "all_active",
        "branches": [
            [{"family": "exponential"}, {"family": "exponential"}],
            [{"family": "exponential"}, {"family": "exponential"}],
        ],
        "grid_points": 4096,
        "mass_tol": 1e-12,
    },
    "policies": [{"name": "ora"}],
    "snr_grid_db": [0.0],
    "taus": [1.0],
    "mc": {"samples": 2000, "seed": 1},
}


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def run(argv):
    return cli.main(argv)


class TestConfigLoading:
    def test_shipped_configs_resolve_by_name(self):
        for name in ("fig1_serial2", "fig1_selective3", "fig2_malaga",
                     "fig3_dgg"):
            cfg = cli.load_config(name)
            assert "topology" in cfg and "policies" in cfg

    def test_missing_file(self, tmp_path, capsys):
        assert run(["capacity-sweep", "--config",
                    str(tmp_path / "nope.json")]) == 1
        assert "neither a file nor a shipped config" in capsys.readouterr().err

    def test_unknown_top_level_key(self, tmp_path, capsys):
        cfg = dict(TINY)
        cfg["typo_key"] = True
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, cfg)]) == 1
        assert "unknown key" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert run(["capacity-sweep", "--config", str(path)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_serial_needs_exactly_one_hop_spelling(self, tmp_path):
        cfg = json.loads(json.dumps(TINY))
        cfg["topology"]["relays"] = 1
        cfg["topology"]["hop"] = {"family": "exponential"}
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, cfg)]) == 1

    def test_unsorted_taus(self, tmp_path, capsys):
        cfg = json.loads(json.dumps(TINY))
        cfg["taus"] = [2.0, 1.0]
        assert run(["outage-sweep", "--config",
                    write_config(tmp_path, cfg)]) == 1

    def test_grid_range_form(self, tmp_path, capsys):
        cfg = json.loads(json.dumps(TINY))
        cfg["snr_grid_db"] = {"start": 0.0, "stop": 10.0, "step": 5.0}
        cfg["policies"] = [{"name": "ora"}]
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, cfg)]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["0", "5", "10"]

    def test_unknown_policy_key(self, tmp_path):
        cfg = json.loads(json.dumps(TINY))
        cfg["policies"] = [{"name": "ora", "cutof": 1.0}]
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, cfg)]) == 1


class TestCapacitySweep:
    def test_golden_values(self, tmp_path, capsys):
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, TINY)]) == 0
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert lines[0] == "snr_db,policy,capacity_bits_per_hz,quad_error,cutoff"
        cells = {}
        for line in lines[1:]:
            snr, policy, cap, err, cut = line.split(",")
            cells[(snr, policy)] = (float(cap), cut)
        assert cells[("0", "ora")][0] == pytest.approx(ORA_EXP1, abs=1e-8)
        assert cells[("0", "opra")][0] == pytest.approx(OPRA_EXP1, abs=1e-8)
        assert cells[("0", "effective[delta=1]")][0] == pytest.approx(
            EFFECTIVE_EXP1_D1, abs=1e-8)
        assert float(cells[("0", "opra")][1]) == pytest.approx(
            OPRA_CUTOFF_EXP1, abs=1e-8)
        assert cells[("0", "ora")][1] == ""  # no cutoff column for ora

    def test_rows_sorted_by_snr_then_policy(self, tmp_path, capsys):
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, TINY)]) == 0
        rows = capsys.readouterr().out.strip().splitlines()[1:]
        keys = [(float(r.split(",")[0]), r.split(",")[1]) for r in rows]
        assert keys == sorted(keys)

    def test_json_format_is_typed(self, tmp_path, capsys):
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, TINY), "--format", "json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert isinstance(rows, list) and len(rows) == 6
        first = rows[0]
        assert isinstance(first["capacity_bits_per_hz"], float)
        assert first["cutoff"] is None or isinstance(first["cutoff"], float)

    def test_output_file_and_byte_stability(self, tmp_path):
        cfg = write_config(tmp_path, TINY)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["capacity-sweep", "--config", cfg, "--out",
                    str(out1)]) == 0
        assert run(["capacity-sweep", "--config", cfg, "--out",
                    str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_grid_failure_exits_two(self, tmp_path, capsys):
        assert run(["capacity-sweep", "--config",
                    write_config(tmp_path, GRIDFAIL)]) == 2
        err = capsys.readouterr().err
        assert "capacity-sweep failed at snr_db=0" in err
        assert "grid_points" in err


class TestOutageSweep:
    def test_closed_form_outage(self, tmp_path, capsys):
        assert run(["outage-sweep", "--config",
                    write_config(tmp_path, TINY)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "snr_db,tau,outage_probability"
        got = {}
        for line in lines[1:]:
            snr, tau, p = line.split(",")
            got[(float(snr), float(tau))] = float(p)
        for snr, mean in ((0.0, 1.0), (10.0, 10.0)):
            for tau in (0.5, 1.0, 2.0):
                want = 1.0 - math.exp(-tau / mean)
                assert got[(snr, tau)] == pytest.approx(want, abs=1e-8)

    def test_validate_flag_appends_mc_columns(self, tmp_path, capsys):
        assert run(["outage-sweep", "--config", write_config(tmp_path, TINY),
                    "--validate", "--samples", "20000"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].endswith(",mc_estimate,mc_std_error,z_score")
        for line in lines[1:]:
            z = float(line.split(",")[-1])
            assert abs(z) < 4.0


class TestOpraCutoff:
    def test_roots_and_residuals(self, tmp_path, capsys):
        assert run(["opra-cutoff", "--config",
                    write_config(tmp_path, TINY)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "snr_db,gamma0,iterations,residual"
        rows = [line.split(",") for line in lines[1:]]
        assert float(rows[0][1]) == pytest.approx(OPRA_CUTOFF_EXP1, abs=1e-8)
        for _, gamma0, iters, residual in rows:
            assert 0.0 < float(gamma0) <= 1.0
            assert int(iters) > 0
            assert abs(float(residual)) <= 1e-10


class TestValidate:
    def test_passing_report(self, tmp_path, capsys):
        assert run(["validate", "--config",
                    write_config(tmp_path, TINY)]) == 0
        out = capsys.readouterr().out
        assert "result: PASS" in out
        assert "z" in out and "comparisons:" in out

    def test_seed_override_changes_estimates(self, tmp_path):
        cfg = write_config(tmp_path, TINY)
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        assert run(["validate", "--config", cfg, "--out", str(a)]) == 0
        assert run(["validate", "--config", cfg, "--out", str(b),
                    "--seed", "99"]) == 0
        assert a.read_text() != b.read_text()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, TINY)
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        assert run(["validate", "--config", cfg, "--out", str(a)]) == 0
        assert run(["validate", "--config", cfg, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_marginal_product_fails_arbitration(self, tmp_path, capsys):
        assert run(["validate", "--config",
                    write_config(tmp_path, MARGINAL)]) == 3
        out = capsys.readouterr().out
        assert "selective combining comparison" in out
        assert "result: FAIL" in out

    def test_numerical_failure_exits_two(self, tmp_path, capsys):
        assert run(["validate", "--config",
                    write_config(tmp_path, GRIDFAIL)]) == 2
        assert "numerical failure" in capsys.readouterr().err


class TestHelp:
    def test_top_level_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--help"])
        assert exc.value.code == 0

    def test_subcommand_help_documents_every_config_key(self, capsys):
        with pytest.raises(SystemExit):
            run(["capacity-sweep", "--help"])
        text = capsys.readouterr().out
        for key in ("description", "topology", "kind", "hops", "branches",
                    "relays", "hop", "formula", "grid_points", "mass_tol",
                    "policies", "qos_delta", "cutoff", "prelog",
                    "snr_grid_db", "taus", "samples", "seed", "snr_db",
                    "output", "format"):
            assert key in text, key


class TestProgrammaticHelpers:
    def test_topology_from_config_rejects_bad_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            cli.topology_from_config({"kind": "mesh", "hops": []})

    def test_policies_from_config_round_trip(self):
        specs = cli.policies_from_config(
            {"policies": [{"name": "effective", "qos_delta": 2.0},
                          {"name": "ora"}]}
        )
        assert [s.label for s in specs] == ["effective[delta=2]", "ora"]
