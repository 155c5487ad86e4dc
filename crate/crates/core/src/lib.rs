//! Exact output-state model of a continuous-variable QKD link that uses a
//! two-mode squeezed vacuum source, optional zero-photon catalysis at the
//! transmitter, an entangling-cloner (thermal-loss) channel and a standard
//! quantum scissor at the receiver.
//!
//! The crate is organised bottom-up:
//!
//! * [`states`]: parameter conversions and source-side state preparation.
//! * [`channel`]: four-mode amplitudes after the channel beam splitter.
//! * [`scissor`]: heralded post-scissor state, reduced states, homodyne
//!   statistics and fidelity.
//! * [`keyrate`]: block spectra, entropies, secret key rate and the PLOB bound.
//! * [`optimizer`]: range search by bisection and the (λ_A, t_s) grid sweep.
//! * [`oracle`]: a slow dense Fock-space simulator used to validate all of
//!   the above.
//!
//! All amplitudes in this model are real; complex generalisations are not
//! represented.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod keyrate;
pub mod optimizer;
pub mod oracle;
pub mod scissor;
pub mod states;

pub use error::{Error, Result};
pub use states::ProtocolParams;
