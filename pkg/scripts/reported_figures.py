#!/usr/bin/env python3
"""Closed-form figures for the NYC calibration.

Regression diagnostics from sums of squares, the income elasticity,
distance decay, first-mile shares, access fractions and fare revenue.
"""

from scootsub.analysis import DAYS_PER_YEAR, FareSchedule, market_revenue, trip_duration
from scootsub.core import TransitAccessProfile, ZoneId
from scootsub.demand import elasticity_effect, fit_diagnostics
from scootsub.factor import FactorModelParams, access_fraction, competition_share

NYC_FIT = FactorModelParams(203.618, {"taxi": 0.049}, (0.104,), (0.0, 0.0, 0.004))


def main():
    d = fit_diagnostics(28, 4, 123.21, 49.643)
    print("regression diagnostics from SSR = 123.21, SSE = 49.643 (n = 28, k = 4)")
    for k in ("r_squared", "adj_r_squared", "f_statistic", "f_p_value", "residual_std_error"):
        print(f"  {k:<20} {d[k]:.6g}")

    print(f"\nincome +1%: ridership x {elasticity_effect(-5.564):.4f}")
    delta = [0.5 + j for j in range(14)]
    print("\ncompetition share P_d (beta = 0.104)")
    for j in range(4):
        print(f"  {j}-{j + 1} mi  {competition_share(NYC_FIT, j, delta):.4f}")
    print(f"\ntaxi share in the first mile: {0.049 * competition_share(NYC_FIT, 0, delta):.6f}")
    egress = TransitAccessProfile(ZoneId("avg"), 0.0, 4.87 / 60)
    print(f"access fraction at 4.87 min egress: {access_fraction(NYC_FIT, egress):.6f}")

    daily, annual = market_revenue(66_000, 12, FareSchedule())
    print(f"\n66,000 trips at 12 min: ${daily:,.0f}/day, ${annual:,.0f}/yr")
    print(f"2.0 mi at 10 mph: {trip_duration(2.0):.0f} min; 1.6 mi: {trip_duration(1.6):.1f} min")
    for label, per_day in (("taxi substitution", 2181), ("access/egress substitution", 758)):
        print(f"{label}: ${per_day:,}/day -> ${DAYS_PER_YEAR * per_day:,}/yr")


if __name__ == "__main__":
    main()
