//! Brute-force reference implementations used to cross-check the library.
//! They recompute everything from the raw vehicle data.

#![allow(dead_code)]

use platoon_match::distribution::ScoreState;
use platoon_match::market::MarketOutcome;
use platoon_match::money::Money;
use platoon_match::scenario::{scenario_from_defaults, Economics, Scenario, VehicleId};

pub fn fleet(defaults: &[i64]) -> Scenario {
    scenario_from_defaults(defaults, 10, &Economics::default()).unwrap()
}

/// Default times of the fleet inside `i`'s delay window.
pub fn feasible(s: &Scenario, i: usize) -> Vec<i64> {
    let v = &s.vehicles()[i];
    let mut out: Vec<i64> = s
        .vehicles()
        .iter()
        .map(|w| w.default_departure)
        .filter(|&t| t >= v.default_departure && t <= v.default_departure + v.max_delay)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn penalty(s: &Scenario, i: usize, t: i64) -> Money {
    let v = &s.vehicles()[i];
    v.penalty_rate * (t - v.default_departure)
}

fn mates(d: &[i64], i: usize) -> Vec<usize> {
    (0..d.len()).filter(|&k| d[k] == d[i]).collect()
}

pub fn even_out(s: &Scenario, d: &[i64], i: usize) -> Money {
    let v = &s.vehicles()[i];
    let n = mates(d, i).len() as i64;
    let share = if n > 1 { (v.profit_leader + v.profit_follower * (n - 1)) / n } else { Money::ZERO };
    share - penalty(s, i, d[i])
}

pub fn score(s: &Scenario, scores: &ScoreState, d: &[i64], i: usize) -> Money {
    let v = &s.vehicles()[i];
    let group = mates(d, i);
    let n = group.len() as i64;
    if n == 1 {
        return -penalty(s, i, d[i]);
    }
    let leader = *group.iter().min_by_key(|&&k| scores.scores()[k]).unwrap();
    let base = if leader == i {
        v.profit_leader + v.score_valuation * (n - 1) / n
    } else {
        v.profit_follower - v.score_valuation / n
    };
    base - penalty(s, i, d[i])
}

pub fn welfare(s: &Scenario, d: &[i64]) -> Money {
    let mut total = Money::ZERO;
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..d.len() {
        total -= penalty(s, i, d[i]);
        if !seen.insert(d[i]) {
            continue;
        }
        let group = mates(d, i);
        if group.len() > 1 {
            let vs = s.vehicles();
            let sum_f: Money = group.iter().map(|&k| vs[k].profit_follower).sum();
            let cheapest = group.iter().map(|&k| vs[k].profit_follower - vs[k].profit_leader).min().unwrap();
            total += sum_f - cheapest;
        }
    }
    total
}

fn profiles(s: &Scenario) -> Vec<Vec<i64>> {
    let sets: Vec<Vec<i64>> = (0..s.len()).map(|i| feasible(s, i)).collect();
    let mut out = vec![Vec::new()];
    for set in &sets {
        out = out
            .into_iter()
            .flat_map(|p| {
                set.iter().map(move |&t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    out
}

/// First profitable unilateral move, as `(vehicle index, new time)`.
pub fn profitable_move(s: &Scenario, d: &[i64], u: &dyn Fn(&[i64], usize) -> Money) -> Option<(usize, i64)> {
    for i in 0..d.len() {
        let here = u(d, i);
        for t in feasible(s, i) {
            let mut q = d.to_vec();
            q[i] = t;
            if u(&q, i) > here {
                return Some((i, t));
            }
        }
    }
    None
}

pub fn equilibria(s: &Scenario, u: &dyn Fn(&[i64], usize) -> Money) -> Vec<Vec<i64>> {
    profiles(s).into_iter().filter(|p| profitable_move(s, p, u).is_none()).collect()
}

pub fn best_welfare(s: &Scenario) -> Money {
    profiles(s).iter().map(|p| welfare(s, p)).max().unwrap()
}

/// Buyer `j`'s pick among `(time, seller, price)` offers sorted by time
/// then id: the first strictly best gain above zero.
fn pick(s: &Scenario, j: usize, offers: &[(i64, VehicleId, Money)]) -> (Money, Option<VehicleId>) {
    let v = &s.vehicles()[j];
    let mut best = (Money::ZERO, None);
    for &(t, id, p) in offers {
        if t < v.default_departure || t > v.default_departure + v.max_delay {
            continue;
        }
        let gain = v.profit_follower - p - v.penalty_rate * (t - v.default_departure);
        if gain > best.0 {
            best = (gain, Some(id));
        }
    }
    best
}

/// Checks a market outcome against direct recomputation: buyers take
/// their best offer, no seller gains by another grid price, every seller
/// leads at its default with at least one follower.
pub fn check_market(s: &Scenario, out: &MarketOutcome, grid: &[Money]) -> Result<(), String> {
    let state = &out.assignment.state;
    let offers = |prices: &dyn Fn(VehicleId) -> Money| {
        let mut o: Vec<(i64, VehicleId, Money)> =
            state.sellers().iter().map(|&id| (s.vehicles()[id.index()].default_departure, id, prices(id))).collect();
        o.sort();
        o
    };
    let current = offers(&|id| state.price(id).unwrap());
    for &j in state.buyers() {
        let (gain, seller) = pick(s, j.index(), &current);
        if out.utilities[j.index()] != gain {
            return Err(format!("buyer {j} gets {} but could get {gain}", out.utilities[j.index()]));
        }
        let expect_t =
            seller.map_or(s.vehicles()[j.index()].default_departure, |k| s.vehicles()[k.index()].default_departure);
        if out.profile.departures[j.index()] != expect_t {
            return Err(format!("buyer {j} departs at the wrong time"));
        }
    }
    for &k in state.sellers() {
        let v = &s.vehicles()[k.index()];
        if out.profile.departures[k.index()] != v.default_departure {
            return Err(format!("seller {k} is not at its default"));
        }
        let count = state.buyers().iter().filter(|&&j| pick(s, j.index(), &current).1 == Some(k)).count();
        if count == 0 {
            return Err(format!("seller {k} has no followers"));
        }
        let have = out.utilities[k.index()];
        if have != v.profit_leader + state.price(k).unwrap() * count as i64 {
            return Err(format!("seller {k} utility {have} does not match its followers"));
        }
        for &p in grid {
            let alt = offers(&|id| if id == k { p } else { state.price(id).unwrap() });
            let n = state.buyers().iter().filter(|&&j| pick(s, j.index(), &alt).1 == Some(k)).count();
            let u = if n == 0 { Money::ZERO } else { v.profit_leader + p * n as i64 };
            if u > have {
                return Err(format!("seller {k} gains by pricing at {p}: {u} > {have}"));
            }
        }
    }
    if out.assignment.demotions.len() > s.len() {
        return Err(format!("{} demotions for {} vehicles", out.assignment.demotions.len(), s.len()));
    }
    Ok(())
}
