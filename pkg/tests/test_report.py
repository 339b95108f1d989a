"""Run-report format: the flat key = value text file, its CSV twin, the
lossless certificate round trip, and the human-readable table.
"""

import numpy as np
import pytest

from vwbound.errors import DocumentError
from vwbound.report import (
    CONDITION_ORDER,
    FORMAT_TAG,
    RunReport,
    attach_solution,
    attach_verification,
    certificate_from_report,
    parse_csv_report,
    render_csv,
    render_table,
    report_from_certificate,
)
from vwbound.shooting import verify_bound


@pytest.fixture(scope="module")
def reference_report(reference_certificate):
    return report_from_certificate(
        reference_certificate, exit_code=2, n=2, source="reference.problem"
    )


class TestRunReport:
    def test_key_value_basics(self):
        rep = RunReport()
        rep.add("alpha", 1.5)
        rep.add("flag", True)
        rep.add("name", "xyz")
        rep.add_array("curve", np.array([1.0, 0.5]))
        assert rep.get_float("alpha") == 1.5
        assert rep.get_bool("flag") is True
        assert rep.get("name") == "xyz"
        assert np.array_equal(rep.get_array("curve"), [1.0, 0.5])

    def test_floats_survive_exactly(self):
        rep = RunReport()
        rep.add("format", FORMAT_TAG)
        value = 0.1 + 0.2  # not representable prettily
        rep.add("v", value)
        back = RunReport.from_text(rep.to_text())
        assert back.get_float("v") == value

    def test_bad_keys_rejected(self):
        rep = RunReport()
        for bad in ("has space", "has=eq", "has\nnewline"):
            with pytest.raises(ValueError):
                rep.add(bad, 1)

    def test_missing_key_raises(self):
        rep = RunReport()
        with pytest.raises(DocumentError) as info:
            rep.get("absent")
        assert info.value.key == "absent"


class TestTextRoundTrip:
    def test_byte_identical(self, reference_report):
        text = reference_report.to_text()
        again = RunReport.from_text(text).to_text()
        assert again == text
        assert text.startswith(f"format = {FORMAT_TAG}\n")

    def test_rejects_empty(self):
        with pytest.raises(DocumentError):
            RunReport.from_text("")

    def test_rejects_missing_format_tag(self):
        with pytest.raises(DocumentError):
            RunReport.from_text("alpha = 1\n")

    def test_rejects_malformed_line(self):
        with pytest.raises(DocumentError) as info:
            RunReport.from_text(f"format = {FORMAT_TAG}\njust words\n")
        assert info.value.line == 2

    def test_write_and_load(self, tmp_path, reference_report):
        path = tmp_path / "cert.txt"
        reference_report.write(path)
        back = RunReport.load(path)
        assert back.to_text() == reference_report.to_text()


class TestCsvTwin:
    def test_lossless(self, reference_report):
        csv_text = render_csv(reference_report)
        back = parse_csv_report(csv_text)
        assert back.to_text() == reference_report.to_text()
        assert csv_text.splitlines()[0] == "key,value"

    def test_header_required(self):
        with pytest.raises(DocumentError):
            parse_csv_report("alpha,1\n")


class TestCertificateRoundTrip:
    def test_rebuild_is_exact(self, reference_certificate, reference_report):
        cert = certificate_from_report(reference_report)
        src = reference_certificate
        assert cert.sigma == src.sigma
        assert cert.c1 == src.c1
        assert cert.c2 == src.c2
        assert cert.c3 == src.c3
        assert cert.v0 == src.v0
        assert cert.v_star == src.v_star
        assert cert.nu == src.nu
        assert cert.omega_tilde == src.omega_tilde
        assert cert.omega0 == src.omega0
        assert cert.v_small_star == src.v_small_star
        assert cert.vstar_required == src.vstar_required
        assert cert.window == src.window
        assert cert.seed == src.seed
        for name in ("ts", "lam_plus", "lam_minus", "lam_mp", "alpha",
                     "ceiling"):
            assert np.array_equal(getattr(cert, name), getattr(src, name))
        assert set(cert.conditions) == set(src.conditions)
        for tag, cond in src.conditions.items():
            assert cert.conditions[tag].passed == cond.passed
            assert cert.conditions[tag].window_certified == \
                cond.window_certified

    def test_report_carries_conditions_in_order(self, reference_report):
        tags = [
            k.split(".")[1] for k in reference_report.keys()
            if k.startswith("cond.") and k.endswith(".passed")
        ]
        assert tags == list(CONDITION_ORDER)

    def test_exit_code_and_meaning(self, reference_report):
        assert reference_report.get_int("exit.code") == 2
        assert reference_report.get("exit.meaning") == "window-certified"


class TestAttachments:
    def test_solution_keys(self, reference_certificate,
                           reference_solution_run, reference_report):
        rep = RunReport.from_text(reference_report.to_text())
        attach_solution(rep, reference_solution_run, exit_code=0)
        assert rep.get_int("solution.converged_at_j") >= 2
        assert rep.get_float("solution.sup_v") == pytest.approx(0.01,
                                                                abs=1e-5)
        assert rep.has("solution.xi.1") and rep.has("solution.xi.2")
        assert rep.get_float("solution.xi.1") == pytest.approx(-0.05,
                                                               abs=1e-6)

    def test_verification_keys(self, reference_problem,
                               reference_certificate,
                               reference_solution_run, reference_report):
        ver = verify_bound(reference_problem, reference_certificate,
                           reference_solution_run.traj)
        rep = RunReport.from_text(reference_report.to_text())
        attach_verification(rep, ver, exit_code=0)
        assert rep.get_bool("verify.passed")
        assert rep.get_float("verify.slack_envelope") > 0.0
        assert rep.get_int("verify.nodes") == \
            reference_solution_run.traj.ts.size


class TestTable:
    def test_one_row_per_condition(self, reference_report):
        table = render_table(reference_report)
        for tag in CONDITION_ORDER:
            matches = [
                ln for ln in table.splitlines()
                if ln.strip().startswith(f"({tag:<3})")
            ]
            assert len(matches) == 1, tag
        assert "window-certified" in table
