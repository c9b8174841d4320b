//! The qmetro guide. Each module is one chapter of `book/`, included
//! verbatim so that every code block in the book runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/channels.md")]
pub mod channels {}

#[doc = include_str!("../../../book/src/priors.md")]
pub mod priors {}

#[doc = include_str!("../../../book/src/testers.md")]
pub mod testers {}

#[doc = include_str!("../../../book/src/seesaw.md")]
pub mod seesaw {}

#[doc = include_str!("../../../book/src/greedy.md")]
pub mod greedy {}

#[doc = include_str!("../../../book/src/realization.md")]
pub mod realization {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

pub mod reference {
    #[doc = include_str!("../../../book/src/reference/config.md")]
    pub mod config {}

    #[doc = include_str!("../../../book/src/reference/report.md")]
    pub mod report {}
}
