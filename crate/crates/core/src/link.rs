//! Link functions defining the treatment-effect scale.
//!
//! The estimand is `g(mu1) - g(mu0)` for a smooth, strictly increasing `g`.
//! Mean-difference, log-ratio and log-odds-ratio contrasts correspond to the
//! identity, log and logit links.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Lower edge of the clamped domain for the log and logit links.
pub const DOMAIN_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    Identity,
    Log,
    Logit,
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::Identity => "identity",
            LinkKind::Log => "log",
            LinkKind::Logit => "logit",
        })
    }
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" => Ok(LinkKind::Identity),
            "log" => Ok(LinkKind::Log),
            "logit" => Ok(LinkKind::Logit),
            other => Err(Error::InvalidParameter(format!("unknown link `{other}`"))),
        }
    }
}

/// A link `g` together with its inverse and derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkSpec {
    pub kind: LinkKind,
}

pub fn make_link(kind: LinkKind) -> LinkSpec {
    LinkSpec { kind }
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl LinkSpec {
    pub const IDENTITY: LinkSpec = LinkSpec { kind: LinkKind::Identity };
    pub const LOG: LinkSpec = LinkSpec { kind: LinkKind::Log };
    pub const LOGIT: LinkSpec = LinkSpec { kind: LinkKind::Logit };

    /// Clamps `x` into the link's working domain. The flag reports whether
    /// clamping changed the value.
    pub fn clamp(&self, x: f64) -> (f64, bool) {
        let y = match self.kind {
            LinkKind::Identity => x,
            LinkKind::Log => x.max(DOMAIN_EPS),
            LinkKind::Logit => x.clamp(DOMAIN_EPS, 1.0 - DOMAIN_EPS),
        };
        (y, y != x)
    }

    pub fn g(&self, x: f64) -> f64 {
        let (x, _) = self.clamp(x);
        match self.kind {
            LinkKind::Identity => x,
            LinkKind::Log => x.ln(),
            LinkKind::Logit => logit(x),
        }
    }

    pub fn g_inv(&self, eta: f64) -> f64 {
        match self.kind {
            LinkKind::Identity => eta,
            LinkKind::Log => eta.exp(),
            LinkKind::Logit => expit(eta),
        }
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        let (x, _) = self.clamp(x);
        match self.kind {
            LinkKind::Identity => 1.0,
            LinkKind::Log => 1.0 / x,
            LinkKind::Logit => 1.0 / (x * (1.0 - x)),
        }
    }

    /// Whether `x` lies on or outside the clamped domain boundary.
    pub fn at_boundary(&self, x: f64) -> bool {
        match self.kind {
            LinkKind::Identity => false,
            LinkKind::Log => x <= DOMAIN_EPS,
            LinkKind::Logit => x <= DOMAIN_EPS || x >= 1.0 - DOMAIN_EPS,
        }
    }
}
