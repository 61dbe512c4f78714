"""Human-readable run report: decision, budget ledger, per-protocol costs."""

from __future__ import annotations

from .config import canonical_text
from .pipeline import PipelineConfig, RunResult


def render_report(result: RunResult, config: PipelineConfig, party_label: str = "local") -> str:
    lines = []
    lines.append("synthetic data publish run report")
    lines.append("=" * 40)
    lines.append(f"party: {party_label}")
    lines.append(f"decision: {'publish' if result.publish else 'no-publish'}")
    lines.append(f"selected hyperparameter: {result.h_selected if result.publish else '-'}")
    lines.append(f"loops executed: {len(result.loops)}")
    for i, rec in enumerate(result.loops, start=1):
        lines.append(f"  loop {i}: candidate={rec.hyperparam} vote={'pass' if rec.vote_bit else 'fail'}")
    lines.append("")
    lines.append("privacy budget ledger")
    lines.append("-" * 40)
    for i in range(len(result.loops)):
        lines.append(f"  loop {i + 1}: allotted (eps_s={config.eps_s}, delta_s={config.delta_s}) "
                     "- nothing published, budget reset")
    if result.publish:
        lines.append(f"  publish: consumed eps_s={config.eps_s}, delta_s={config.delta_s}")
        lines.append(f"  publish: consumed eps_p={config.eps_p}, delta_p={config.delta_p} "
                     "(preprocessing; unconsumed by this instantiation - exact quantiles, not DP)")
        total_eps = config.eps_s + config.eps_p
        total_delta = config.delta_s + config.delta_p
        lines.append(f"  claimed total: (eps={total_eps}, delta={total_delta})")
    else:
        lines.append("  nothing published: total consumed budget (eps=0, delta=0)")
    lines.append("")
    lines.append("per-protocol communication (this party)")
    lines.append("-" * 40)
    lines.append(f"  {'label':<12}{'bytes':>12}{'messages':>10}{'rounds':>8}{'seconds':>10}")
    for label, e in sorted(result.ledger.items()):
        lines.append(f"  {label:<12}{e['bytes_sent']:>12}{e['messages_sent']:>10}"
                     f"{e['rounds']:>8}{e['seconds']:>10.3f}")
    lines.append("")
    lines.append("openings (public reconstructions)")
    lines.append("-" * 40)
    if result.opening_log:
        for reason, count in result.opening_log:
            lines.append(f"  {reason}: {count} value(s)")
    else:
        lines.append("  none")
    lines.append("")
    lines.append("directed reveals to the generator enclave (DP-protected)")
    lines.append("-" * 40)
    if result.reveal_log:
        for reason, count in result.reveal_log:
            lines.append(f"  {reason}: {count} value(s)")
    else:
        lines.append("  none")
    lines.append("")
    lines.append("configuration echo")
    lines.append("-" * 40)
    lines.extend("  " + ln for ln in canonical_text(config).splitlines())
    lines.append("")
    return "\n".join(lines)
