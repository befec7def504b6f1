//! Moment–cumulant algebra checked symbolically and on exact integers.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use photon_stats::moments::{
    cumulants_from_moments, cumulants_from_raw, moments_from_cumulants, raw_from_cumulants, CumulantSet, MomentSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Polynomial in κ₁..κ₅ with integer coefficients, keyed by exponents.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Poly(BTreeMap<[u8; 5], i64>);

impl Poly {
    fn var(i: usize) -> Self {
        let mut e = [0u8; 5];
        e[i] = 1;
        Poly(BTreeMap::from([(e, 1)]))
    }

    fn from_terms(terms: &[(i64, [u8; 5])]) -> Self {
        let mut p = BTreeMap::new();
        for &(c, e) in terms {
            *p.entry(e).or_insert(0) += c;
        }
        Poly(p).pruned()
    }

    fn pruned(mut self) -> Self {
        self.0.retain(|_, c| *c != 0);
        self
    }
}

impl From<u32> for Poly {
    fn from(c: u32) -> Self {
        Poly(BTreeMap::from([([0; 5], i64::from(c))])).pruned()
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (e, c) in rhs.0 {
            *self.0.entry(e).or_insert(0) += c;
        }
        self.pruned()
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(mut self, rhs: Poly) -> Poly {
        for (e, c) in rhs.0 {
            *self.0.entry(e).or_insert(0) -= c;
        }
        self.pruned()
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut out = BTreeMap::new();
        for (ea, ca) in &self.0 {
            for (eb, cb) in &rhs.0 {
                let mut e = [0u8; 5];
                for i in 0..5 {
                    e[i] = ea[i] + eb[i];
                }
                *out.entry(e).or_insert(0) += ca * cb;
            }
        }
        Poly(out).pruned()
    }
}

/// Exponent vector of κ₁^a κ₂^b κ₃^c κ₄^d κ₅^e.
const fn k(a: u8, b: u8, c: u8, d: u8, e: u8) -> [u8; 5] {
    [a, b, c, d, e]
}

/// The expansions of μ′₁..μ′₅ in cumulants, term by term.
fn printed() -> Vec<Vec<(i64, [u8; 5])>> {
    vec![
        vec![(1, k(1, 0, 0, 0, 0))],
        vec![(1, k(0, 1, 0, 0, 0)), (1, k(2, 0, 0, 0, 0))],
        vec![(1, k(0, 0, 1, 0, 0)), (3, k(1, 1, 0, 0, 0)), (1, k(3, 0, 0, 0, 0))],
        vec![
            (1, k(0, 0, 0, 1, 0)),
            (4, k(1, 0, 1, 0, 0)),
            (3, k(0, 2, 0, 0, 0)),
            (6, k(2, 1, 0, 0, 0)),
            (1, k(4, 0, 0, 0, 0)),
        ],
        vec![
            (1, k(0, 0, 0, 0, 1)),
            (5, k(1, 0, 0, 1, 0)),
            (10, k(0, 1, 1, 0, 0)),
            (10, k(2, 0, 1, 0, 0)),
            (15, k(1, 2, 0, 0, 0)),
            (10, k(3, 1, 0, 0, 0)),
            (1, k(5, 0, 0, 0, 0)),
        ],
    ]
}

fn eval_i128(terms: &[(i64, [u8; 5])], kappa: &[i128; 5]) -> i128 {
    terms
        .iter()
        .map(|(c, e)| {
            let mut t = i128::from(*c);
            for i in 0..5 {
                t *= kappa[i].pow(u32::from(e[i]));
            }
            t
        })
        .sum()
}

#[test]
fn recursion_reproduces_printed_coefficients() {
    let vars: Vec<Poly> = (0..5).map(Poly::var).collect();
    let raw = raw_from_cumulants(&vars);
    for (j, (got, want)) in raw.iter().zip(printed()).enumerate() {
        assert_eq!(got, &Poly::from_terms(&want), "μ′_{}", j + 1);
        // every monomial has total weight j + 1
        for e in got.0.keys() {
            let weight: u32 = e.iter().enumerate().map(|(i, &p)| (i as u32 + 1) * u32::from(p)).sum();
            assert_eq!(weight, j as u32 + 1);
        }
    }
}

#[test]
fn inverse_recursion_gives_printed_cumulant_identities() {
    // central moments as symbols: μ′ with μ₁ = 0
    let m: Vec<Poly> = (0..5).map(Poly::var).collect();
    let mut central = m.clone();
    central[0] = Poly::from(0);
    let kappa = cumulants_from_raw(&central);
    let mu = |i: usize| Poly::var(i - 1);
    assert_eq!(kappa[1], mu(2));
    assert_eq!(kappa[2], mu(3));
    assert_eq!(kappa[3], mu(4) - Poly::from(3) * mu(2) * mu(2));
    assert_eq!(kappa[4], mu(5) - Poly::from(10) * mu(2) * mu(3));
    // and the two recursions are inverse to each other symbolically
    let back = raw_from_cumulants(&cumulants_from_raw(&m));
    assert_eq!(back, m);
}

#[test]
fn exact_integer_inputs_match_printed_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let terms = printed();
    for _ in 0..2000 {
        let kappa: [i128; 5] = std::array::from_fn(|_| rng.random_range(-1000..=1000));
        let raw = raw_from_cumulants(&kappa);
        for j in 0..5 {
            assert_eq!(raw[j], eval_i128(&terms[j], &kappa), "j={} κ={kappa:?}", j + 1);
        }
        assert_eq!(cumulants_from_raw(&raw), kappa.to_vec());
    }
}

#[test]
fn float_api_is_exact_on_small_integers() {
    // |μ′₅| < 2⁵³ for |κ| ≤ 60, so every operation is exact in f64.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let terms = printed();
    for _ in 0..2000 {
        let kappa: [i128; 5] = std::array::from_fn(|_| rng.random_range(-60..=60));
        let set = CumulantSet::new(kappa.iter().map(|&x| x as f64).collect()).unwrap();
        let m = moments_from_cumulants(&set).unwrap();
        for j in 1..=5 {
            assert_eq!(m.raw(j), eval_i128(&terms[j - 1], &kappa) as f64, "j={j} κ={kappa:?}");
        }
        // central moments are the same polynomials with κ₁ = 0
        let mut centred = kappa;
        centred[0] = 0;
        for r in 2..=5 {
            assert_eq!(m.central(r), eval_i128(&terms[r - 1], &centred) as f64);
        }
        let back = cumulants_from_moments(&m).unwrap();
        for (a, b) in back.as_slice().iter().zip(&kappa) {
            assert_eq!(*a, *b as f64);
        }
    }
}

#[test]
fn lower_orders_truncate_consistently() {
    let full = moments_from_cumulants(&CumulantSet::new(vec![2.0, 3.0, -1.0, 5.0, 7.0]).unwrap()).unwrap();
    for order in 1..=4 {
        let part = moments_from_cumulants(&CumulantSet::new(vec![2.0, 3.0, -1.0, 5.0, 7.0][..order].to_vec()).unwrap())
            .unwrap();
        assert_eq!(part.order(), order);
        for j in 1..=order {
            assert_eq!(part.raw(j), full.raw(j));
        }
    }
    assert!(CumulantSet::new(vec![0.0; 6]).is_err());
    assert!(CumulantSet::new(vec![]).is_err());
    let m = MomentSet::from_central(1.0, &[2.0, 0.0, 12.0, 0.0]).unwrap();
    assert_eq!(m.raw(2), 3.0);
}
