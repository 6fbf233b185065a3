# fedtoe/schemas/reports.py

from pydantic import BaseModel, Field


class CheckResult(BaseModel):
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        text = f"{self.name} | measured={self.measured:.6g} | tolerance={self.tolerance:.6g} | {verdict}"
        return f"{text} | {self.detail}" if self.detail else text


class Report(BaseModel):
    title: str
    checks: list[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, measured: float, tolerance: float, passed: bool, detail: str = "") -> CheckResult:
        check = CheckResult(
            name=name, measured=float(measured), tolerance=float(tolerance), passed=bool(passed), detail=detail
        )
        self.checks.append(check)
        return check

    def failures(self) -> list[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def render(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [f"# {self.title}: {verdict}"]
        lines.extend(check.line() for check in self.checks)
        return "\n".join(lines)


class ConvexityReport(Report):
    min_relative_second_difference: float = 0.0
    midpoint_violations: int = 0
    points_checked: int = 0
