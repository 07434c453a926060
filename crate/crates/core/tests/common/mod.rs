//! Independent reference pipeline used by the integration tests: naive
//! scoring, a comparison sort, the d² form of Spearman's rho and hash-set
//! overlaps. Shares no code with the library's ranking or statistics.

#![allow(dead_code)]

use std::collections::HashSet;

/// Image indices by descending dot product, ties by ascending index.
pub fn reference_order(query: &[f32], images: &[f32], dim: usize) -> Vec<usize> {
    let scores: Vec<f64> = images
        .chunks(dim)
        .map(|row| {
            let mut s = 0.0f64;
            for (a, b) in query.iter().zip(row) {
                s += f64::from(*a) * f64::from(*b);
            }
            s
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

/// `1 - 6 Σd² / (n (n² - 1))` on two tie-free orders.
pub fn d2_rho(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut pos_a = vec![0usize; n];
    let mut pos_b = vec![0usize; n];
    for (p, &i) in a.iter().enumerate() {
        pos_a[i] = p;
    }
    for (p, &i) in b.iter().enumerate() {
        pos_b[i] = p;
    }
    let d2: f64 = (0..n)
        .map(|i| {
            let d = pos_a[i] as f64 - pos_b[i] as f64;
            d * d
        })
        .sum();
    let n = n as f64;
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn overlap(a: &[usize], b: &[usize], k: usize) -> f64 {
    let left: HashSet<usize> = a[..k].iter().copied().collect();
    b[..k].iter().filter(|i| left.contains(i)).count() as f64 / k as f64
}

/// Plain arithmetic mean.
pub fn naive_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Group means over every pair of `orders`: (global, local per k).
pub fn reference_group(orders: &[Vec<usize>], k_values: &[usize]) -> (f64, Vec<f64>) {
    let mut rhos = Vec::new();
    let mut overlaps = vec![Vec::new(); k_values.len()];
    for i in 0..orders.len() {
        for j in i + 1..orders.len() {
            rhos.push(d2_rho(&orders[i], &orders[j]));
            for (slot, &k) in overlaps.iter_mut().zip(k_values) {
                slot.push(overlap(&orders[i], &orders[j], k));
            }
        }
    }
    (
        naive_mean(&rhos),
        overlaps.iter().map(|v| naive_mean(v)).collect(),
    )
}
