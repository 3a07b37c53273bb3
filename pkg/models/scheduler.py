from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class VerificationRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    device_id: int = 0
    arrival_a_i: float
    class_c: str = "class1"
    deadline_d_i: float
    est_verified_g_i: float = Field(ge=0.0)
    est_cost_v_i: float = Field(gt=0.0)
    est_memory_m_i: int = Field(gt=0)
    l_new: int = Field(ge=1)
    l_cached: int = Field(ge=0)
    born_violated: bool = False


class BatchPlan(BaseModel):
    requests: List[VerificationRequest] = Field(default_factory=list)
    dispatch_time: float = 0.0
    predicted_time: float = 0.0
    total_memory: int = 0
    critical_ids: List[int] = Field(default_factory=list)
    stopped: bool = False
    forced: bool = False
    policy: str = "wisp"

    @property
    def ids(self) -> List[int]:
        return [r.id for r in self.requests]

    @property
    def value(self) -> float:
        return sum(r.est_verified_g_i for r in self.requests)

    def __len__(self) -> int:
        return len(self.requests)


class SchedulerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    guard_delta_s: float = Field(default=0.005, ge=0.0, description="Guard time subtracted in the latest start time")
    memory_budget_pages: int = Field(default=8192, gt=0)
    memory_schedule: List[Tuple[float, int]] = Field(
        default_factory=list, description="Piecewise-constant (start_time, pages) overrides of the budget"
    )
    max_batch_size: int = Field(default=256, ge=1)
    dwell_s: float = Field(default=0.002, ge=0.0)
    page_size_tokens: int = Field(default=16, ge=1)
    growth_tokens: Optional[int] = Field(default=None, ge=0, description="Expected committed growth; defaults to l_new + 1")
    relax_doomed: bool = Field(
        default=False, description="Admit requests that miss their deadline even alone without constraining the batch deadline"
    )
    expired_policy: Literal["critical", "backlog"] = "critical"
    starvation_age_s: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _check_schedule(self):
        times = [t for t, _ in self.memory_schedule]
        if times != sorted(times):
            raise ValueError("memory_schedule must be sorted by start time")
        if any(pages <= 0 for _, pages in self.memory_schedule):
            raise ValueError("memory_schedule budgets must be positive")
        return self

    def memory_budget_at(self, t: float) -> int:
        budget = self.memory_budget_pages
        for start, pages in self.memory_schedule:
            if t >= start:
                budget = pages
            else:
                break
        return budget

    @property
    def max_memory_budget(self) -> int:
        return max([self.memory_budget_pages] + [pages for _, pages in self.memory_schedule])
