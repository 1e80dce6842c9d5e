//! Error-law toolbox: densities, quantiles and samplers, central and
//! noncentral chi-square laws, and numerical convolution.

mod chisq;
mod laws;
pub mod normal;

pub use chisq::{chisq_cdf, chisq_sf, noncentral_chisq_cdf, ChiSquareRef};
pub use laws::{convolve_densities, ErrorLaw, WINDOW_TAIL};
