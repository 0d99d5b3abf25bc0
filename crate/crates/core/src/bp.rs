//! Loopy sum-product message passing on the evidence-clamped factor graph.
//!
//! Used only to derive proposal conditionals; exact inference goes through
//! the `exact` module. Messages are kept in linear space and normalized
//! every update, a flooding schedule runs a fixed number of iterations, and
//! the last iterate is used whether or not the messages converged.

use alloc::vec::Vec;

use crate::model::{BeliefNetwork, Evidence};

struct BpFactor {
    /// Non-evidence part of the CPT scope: parents in CPT order, child last
    /// when the child is not observed. The table's last axis varies fastest.
    scope: Vec<usize>,
    cards: Vec<usize>,
    table: Vec<f64>,
}

impl BpFactor {
    fn from_cpt(bn: &BeliefNetwork, e: &Evidence, child: usize) -> Option<BpFactor> {
        let cpt = bn.cpt(child);
        let full: Vec<usize> = cpt
            .parents()
            .iter()
            .copied()
            .chain(core::iter::once(child))
            .collect();
        let scope: Vec<usize> = full.iter().copied().filter(|v| !e.contains(*v)).collect();
        if scope.is_empty() {
            return None;
        }
        let cards: Vec<usize> = scope.iter().map(|&v| bn.cardinality(v) as usize).collect();
        let size: usize = cards.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut values = alloc::vec![0u32; scope.len()];
        for idx in 0..size {
            let mut rem = idx;
            for pos in (0..scope.len()).rev() {
                values[pos] = (rem % cards[pos]) as u32;
                rem /= cards[pos];
            }
            let lookup = |v: usize| -> u32 {
                e.get(v)
                    .unwrap_or_else(|| values[scope.iter().position(|&s| s == v).unwrap()])
            };
            let mut row = 0usize;
            for &p in cpt.parents() {
                row = row * bn.cardinality(p) as usize + lookup(p) as usize;
            }
            table.push(cpt.prob(row, lookup(child)));
        }
        Some(BpFactor {
            scope,
            cards,
            table,
        })
    }
}

/// Runs loopy BP and returns, for every non-evidence variable, its context
/// (non-evidence parents in CPT order) and the estimated conditional table
/// `Q(x_v | context)`, rows normalized where they carry mass and left
/// all-zero where belief propagation assigns none (the caller floors them).
pub(crate) fn conditionals(
    bn: &BeliefNetwork,
    e: &Evidence,
    iterations: u32,
    damping: f64,
) -> Vec<Option<(Vec<usize>, Vec<f64>)>> {
    let n = bn.variable_count();
    let factors: Vec<Option<BpFactor>> = (0..n).map(|v| BpFactor::from_cpt(bn, e, v)).collect();

    // Edges: (factor child index, position of var within its scope).
    let mut edges_of_var: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); n];
    for (f_idx, f) in factors.iter().enumerate() {
        if let Some(f) = f {
            for (pos, &v) in f.scope.iter().enumerate() {
                edges_of_var[v].push((f_idx, pos));
            }
        }
    }

    let uniform = |card: usize| alloc::vec![1.0 / card as f64; card];
    let mut to_var: Vec<Vec<Vec<f64>>> = factors
        .iter()
        .map(|f| match f {
            Some(f) => f.cards.iter().map(|&c| uniform(c)).collect(),
            None => Vec::new(),
        })
        .collect();
    let mut to_factor = to_var.clone();

    for _ in 0..iterations {
        // Variable-to-factor messages from the current factor-to-variable
        // messages.
        for (f_idx, f) in factors.iter().enumerate() {
            let Some(f) = f else { continue };
            for (pos, &v) in f.scope.iter().enumerate() {
                let card = f.cards[pos];
                let mut msg = alloc::vec![1.0f64; card];
                for &(g_idx, g_pos) in &edges_of_var[v] {
                    if g_idx == f_idx && g_pos == pos {
                        continue;
                    }
                    for (slot, &incoming) in msg.iter_mut().zip(&to_var[g_idx][g_pos]) {
                        *slot *= incoming;
                    }
                }
                normalize_or_uniform(&mut msg);
                to_factor[f_idx][pos] = msg;
            }
        }

        // Factor-to-variable messages, damped against the previous iterate.
        for (f_idx, f) in factors.iter().enumerate() {
            let Some(f) = f else { continue };
            let mut values = alloc::vec![0u32; f.scope.len()];
            for (pos, _) in f.scope.iter().enumerate() {
                let card = f.cards[pos];
                let mut msg = alloc::vec![0.0f64; card];
                for (idx, &entry) in f.table.iter().enumerate() {
                    if entry == 0.0 {
                        continue;
                    }
                    let mut rem = idx;
                    for p in (0..f.scope.len()).rev() {
                        values[p] = (rem % f.cards[p]) as u32;
                        rem /= f.cards[p];
                    }
                    let mut term = entry;
                    for (p, &val) in values.iter().enumerate() {
                        if p != pos {
                            term *= to_factor[f_idx][p][val as usize];
                        }
                    }
                    msg[values[pos] as usize] += term;
                }
                normalize_or_uniform(&mut msg);
                if damping > 0.0 {
                    let old = &to_var[f_idx][pos];
                    for (m, &o) in msg.iter_mut().zip(old) {
                        *m = (1.0 - damping) * *m + damping * o;
                    }
                    normalize_or_uniform(&mut msg);
                }
                to_var[f_idx][pos] = msg;
            }
        }
    }

    // Conditionals from the belief at each variable's own CPT factor. The
    // child sits last in the factor scope, so the belief table is already
    // laid out context-row-major with the child fastest.
    (0..n)
        .map(|v| {
            if e.contains(v) {
                return None;
            }
            let f = factors[v].as_ref().expect("unobserved child keeps its factor");
            debug_assert_eq!(*f.scope.last().unwrap(), v);
            let card = *f.cards.last().unwrap();
            let mut belief = f.table.clone();
            let mut values = alloc::vec![0u32; f.scope.len()];
            for (idx, slot) in belief.iter_mut().enumerate() {
                let mut rem = idx;
                for p in (0..f.scope.len()).rev() {
                    values[p] = (rem % f.cards[p]) as u32;
                    rem /= f.cards[p];
                }
                for (p, &val) in values.iter().enumerate() {
                    *slot *= to_factor[v][p][val as usize];
                }
            }
            for row in belief.chunks_mut(card) {
                let sum: f64 = row.iter().sum();
                if sum > 0.0 {
                    for x in row.iter_mut() {
                        *x /= sum;
                    }
                }
            }
            let context = f.scope[..f.scope.len() - 1].to_vec();
            Some((context, belief))
        })
        .collect()
}

fn normalize_or_uniform(msg: &mut [f64]) {
    let sum: f64 = msg.iter().sum();
    if sum > 0.0 {
        for x in msg.iter_mut() {
            *x /= sum;
        }
    } else {
        let u = 1.0 / msg.len() as f64;
        for x in msg.iter_mut() {
            *x = u;
        }
    }
}
