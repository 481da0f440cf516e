use std::fmt;
use std::str::FromStr;

/// Time discretization of a run, and of individual steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    CrankNicolson,
    Bdf2,
    Bdf3,
    /// BDF2 for the Stokes part with extrapolated convection.
    Sbdf2,
}

/// Weights of one step equation
/// `sum_j alpha_j M u^{n-j} / dt + theta (A + C)(u^n) + (1 - theta) (A + C)(u^{n-1})
///  + sum_j w_j C(u^{n-1-j}) + B (u^n, p^n) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub alpha: &'static [f64],
    /// Implicit weight of the viscous and (unless extrapolated) convective
    /// terms.
    pub theta: f64,
    /// Extrapolation weights `w_j` of the convective term, applied to
    /// `u^{n-1}, u^{n-2}, ...`; empty for implicit convection.
    pub extrapolation: &'static [f64],
}

impl Stencil {
    /// States involved, the new one included.
    pub fn depth(&self) -> usize {
        self.alpha.len().max(self.extrapolation.len() + 1)
    }

    pub fn implicit_convection(&self) -> bool {
        self.extrapolation.is_empty()
    }
}

const CN: Stencil = Stencil {
    alpha: &[1.0, -1.0],
    theta: 0.5,
    extrapolation: &[],
};
const BDF2: Stencil = Stencil {
    alpha: &[1.5, -2.0, 0.5],
    theta: 1.0,
    extrapolation: &[],
};
const BDF3: Stencil = Stencil {
    alpha: &[11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0],
    theta: 1.0,
    extrapolation: &[],
};
const SBDF2: Stencil = Stencil {
    alpha: &[1.5, -2.0, 0.5],
    theta: 1.0,
    extrapolation: &[2.0, -1.0],
};

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::CrankNicolson, Scheme::Bdf2, Scheme::Bdf3, Scheme::Sbdf2];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::CrankNicolson => "cn",
            Scheme::Bdf2 => "bdf2",
            Scheme::Bdf3 => "bdf3",
            Scheme::Sbdf2 => "sbdf2",
        }
    }

    /// Stable numeric id used in checkpoints.
    pub fn id(self) -> u8 {
        match self {
            Scheme::CrankNicolson => 0,
            Scheme::Bdf2 => 1,
            Scheme::Bdf3 => 2,
            Scheme::Sbdf2 => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Scheme::ALL.into_iter().find(|s| s.id() == id)
    }

    pub fn stencil(self) -> Stencil {
        match self {
            Scheme::CrankNicolson => CN,
            Scheme::Bdf2 => BDF2,
            Scheme::Bdf3 => BDF3,
            Scheme::Sbdf2 => SBDF2,
        }
    }

    /// Convergence order in time.
    pub fn order(self) -> usize {
        match self {
            Scheme::Bdf3 => 3,
            _ => 2,
        }
    }

    /// Crank–Nicolson steps taken before the multistep formula starts.
    pub fn startup_steps(self) -> usize {
        match self {
            Scheme::CrankNicolson => 0,
            Scheme::Bdf2 | Scheme::Sbdf2 => 1,
            Scheme::Bdf3 => 2,
        }
    }

    /// Step type used for step `n` (1-based) of a run with this scheme.
    pub fn kind_for_step(self, n: usize) -> Scheme {
        if n <= self.startup_steps() {
            Scheme::CrankNicolson
        } else {
            self
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cn" | "crank-nicolson" => Ok(Scheme::CrankNicolson),
            "bdf2" => Ok(Scheme::Bdf2),
            "bdf3" => Ok(Scheme::Bdf3),
            "sbdf2" | "imex" => Ok(Scheme::Sbdf2),
            _ => Err(format!("unknown scheme '{s}' (expected cn, bdf2, bdf3 or sbdf2)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `sum_j alpha_j f(t - j dt) / dt` at `t = 1.7`.
    fn apply(st: &Stencil, f: impl Fn(f64) -> f64, dt: f64) -> f64 {
        let t = 1.7;
        st.alpha
            .iter()
            .enumerate()
            .map(|(j, a)| a * f(t - j as f64 * dt))
            .sum::<f64>()
            / dt
    }

    #[test]
    fn bdf_weights_are_exact_up_to_their_order() {
        let dt = 0.1;
        let t: f64 = 1.7;
        for (s, order) in [(Scheme::Bdf2, 2), (Scheme::Bdf3, 3), (Scheme::Sbdf2, 2)] {
            let st = s.stencil();
            assert!(st.alpha.iter().sum::<f64>().abs() < 1e-15);
            for m in 1..=order {
                let d = apply(&st, |x| x.powi(m), dt);
                let exact = m as f64 * t.powi(m - 1);
                assert!((d - exact).abs() < 1e-11, "{s} m={m}: {d} vs {exact}");
            }
            let d = apply(&st, |x| x.powi(order + 1), dt);
            assert!((d - (order + 1) as f64 * t.powi(order)).abs() > 1e-6);
        }
    }

    #[test]
    fn bdf3_weights_match_published_coefficients() {
        let st = Scheme::Bdf3.stencil();
        let expected = [11.0, -18.0, 9.0, -2.0];
        for (a, e) in st.alpha.iter().zip(expected) {
            assert!((a * 6.0 - e).abs() < 1e-15);
        }
    }

    #[test]
    fn crank_nicolson_is_trapezoidal() {
        // (f(t) - f(t - dt)) / dt = (f'(t) + f'(t - dt)) / 2 for quadratics.
        let st = Scheme::CrankNicolson.stencil();
        let dt = 0.25;
        let t: f64 = 1.7;
        for m in 0..=2 {
            let d = apply(&st, |x| x.powi(m), dt);
            let fp = |x: f64| if m == 0 { 0.0 } else { m as f64 * x.powi(m - 1) };
            let trap = st.theta * fp(t) + (1.0 - st.theta) * fp(t - dt);
            assert!((d - trap).abs() < 1e-12);
        }
    }

    #[test]
    fn extrapolation_reproduces_linear_data() {
        let st = Scheme::Sbdf2.stencil();
        let dt = 0.3;
        let t: f64 = 2.0;
        for m in 0..=1 {
            let f = |x: f64| 3.0 * x.powi(m) + 1.0;
            let e: f64 = st
                .extrapolation
                .iter()
                .enumerate()
                .map(|(j, w)| w * f(t - (j + 1) as f64 * dt))
                .sum();
            assert!((e - f(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn startup_sequence() {
        let seq = |s: Scheme| (1..=4).map(|n| s.kind_for_step(n)).collect::<Vec<_>>();
        use Scheme::*;
        assert_eq!(seq(Bdf3), [CrankNicolson, CrankNicolson, Bdf3, Bdf3]);
        assert_eq!(seq(Bdf2), [CrankNicolson, Bdf2, Bdf2, Bdf2]);
        assert_eq!(seq(Sbdf2), [CrankNicolson, Sbdf2, Sbdf2, Sbdf2]);
        assert_eq!(seq(CrankNicolson), [CrankNicolson; 4]);
    }

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(Scheme::from_id(s.id()), Some(s));
        }
        assert!("rk4".parse::<Scheme>().is_err());
    }
}
