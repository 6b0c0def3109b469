import pytest

from passifi import ftm
from passifi.adversary import assert_passive_silence

# Every frame log simulated anywhere in the suite, audited for passive transmissions.
AUDIT = {"logs": 0, "passive_frames": 0}
ACCEPTANCE_LINES: list[str] = []


def _audit(frame_log):
    AUDIT["logs"] += 1
    AUDIT["passive_frames"] += assert_passive_silence([frame_log])["passive_frames"]


def pytest_configure(config):
    ftm.add_frame_log_listener(_audit)


def pytest_sessionfinish(session, exitstatus):
    if AUDIT["passive_frames"]:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    tr.section("passive-silence audit")
    status = "PASS" if AUDIT["passive_frames"] == 0 else "FAIL"
    tr.write_line(f"[{status}] {AUDIT['logs']} frame logs, {AUDIT['passive_frames']} passive-station frames")
    if ACCEPTANCE_LINES:
        tr.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            tr.write_line(line)


@pytest.fixture
def audit():
    return AUDIT
