//! Autoregressive Bernstein flows.

pub mod conditioner;
pub mod diffeo;
pub mod layer;
pub mod model;
pub mod prior;

pub use conditioner::{ConditionerNet, NetCache, DEFAULT_HIDDEN};
pub use diffeo::TargetDiffeo;
pub use layer::{DimSource, FlowLayer, LayerShape};
pub use model::{FlowConfig, FlowModel, Init, ParamGroup, ParamKind};
pub use prior::{PriorKind, PriorSpec};
