use rand::Rng;

use super::TabularMdp;
use crate::error::{Error, Result};
use crate::rng::{dirichlet_ones, rng_from_seed};

/// Random MDP: Dirichlet(1, …, 1) transition rows and uniform `[0, 1]` costs.
///
/// Draw order is fixed (all transition rows in `(s, a)` order, then costs), so
/// a seed identifies the MDP across platforms.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    let mut rng = rng_from_seed(seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(dirichlet_ones(&mut rng, n_states));
    }
    let cost = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(n_states, n_actions, gamma, transition, cost)
}

const MOVES: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// `size × size` gridworld with actions up/down/left/right.
///
/// With probability `slip` the executed action is drawn uniformly from the
/// four moves. Moving into a wall leaves the agent in place. Every cell
/// costs 1 per step except the goal, which is absorbing and free. The seed
/// picks the goal cell.
pub fn gridworld(size: usize, slip: f64, gamma: f64, seed: u64) -> Result<TabularMdp> {
    if size == 0 {
        return Err(Error::domain("gridworld size must be positive"));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::domain(format!("slip probability {slip} outside [0, 1]")));
    }
    let n = size * size;
    let goal = rng_from_seed(seed).random_range(0..n);
    let step = |cell: usize, mv: usize| -> usize {
        let (r, c) = ((cell / size) as i64, (cell % size) as i64);
        let (dr, dc) = MOVES[mv];
        let (nr, nc) = (r + dr, c + dc);
        if nr < 0 || nc < 0 || nr >= size as i64 || nc >= size as i64 {
            cell
        } else {
            (nr as usize) * size + nc as usize
        }
    };
    let mut transition = vec![0.0; n * 4 * n];
    let mut cost = vec![1.0; n * 4];
    for s in 0..n {
        for a in 0..4 {
            let row = &mut transition[(s * 4 + a) * n..(s * 4 + a + 1) * n];
            if s == goal {
                row[s] = 1.0;
                cost[s * 4 + a] = 0.0;
                continue;
            }
            row[step(s, a)] += 1.0 - slip;
            for mv in 0..4 {
                row[step(s, mv)] += slip / 4.0;
            }
        }
    }
    TabularMdp::new(n, 4, gamma, transition, cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::solve_optimal;

    #[test]
    fn random_mdp_is_reproducible() {
        let a = random_mdp(5, 3, 0.9, 42).unwrap();
        let b = random_mdp(5, 3, 0.9, 42).unwrap();
        let c = random_mdp(5, 3, 0.9, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gridworld_goal_is_absorbing_and_free() {
        let g = gridworld(4, 0.1, 0.9, 7).unwrap();
        assert_eq!(g.n_states(), 16);
        let goal = (0..16).find(|&s| g.c(s, 0) == 0.0).unwrap();
        for a in 0..4 {
            assert_eq!(g.next(goal, a)[goal], 1.0);
        }
        let (_, est) = solve_optimal(&g).unwrap();
        assert!(est.v[goal].abs() < 1e-12);
        // every other state pays at least 1 before reaching the goal
        assert!(est.v.iter().enumerate().all(|(s, &v)| s == goal || v >= 1.0 - 1e-12));
    }

    #[test]
    fn deterministic_gridworld_moves() {
        let g = gridworld(3, 0.0, 0.9, 0).unwrap();
        let goal = (0..9).find(|&s| g.c(s, 0) == 0.0).unwrap();
        let s = if goal == 4 { 0 } else { 4 };
        // from the centre "down" goes to 7; from corner 0 "up" hits a wall
        if s == 4 {
            assert_eq!(g.next(4, 1)[7], 1.0);
        } else {
            assert_eq!(g.next(0, 0)[0], 1.0);
        }
        assert!(gridworld(3, 1.5, 0.9, 0).is_err());
    }
}
