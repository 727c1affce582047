use crate::channel::{compute_gains, ChannelParams, GainMatrix};
use crate::error::{Error, Result};
use crate::extended::{build_neighborhoods, enumerate_extended, ExtendedApSet, Neighborhoods};
use crate::topology::Topology;

/// Everything the solvers need about one deployment.
#[derive(Clone, Debug)]
pub struct Network {
    pub params: ChannelParams,
    pub gains: GainMatrix,
    pub neighborhoods: Neighborhoods,
    pub ext: ExtendedApSet,
}

impl Network {
    pub fn build(topology: &Topology, params: &ChannelParams) -> Result<Self> {
        let gains = compute_gains(topology, params)?;
        Network::from_gains(gains, params.clone())
    }

    pub fn from_gains(gains: GainMatrix, params: ChannelParams) -> Result<Self> {
        params.validate()?;
        if gains.n_aps() == 0 || gains.n_ues() == 0 {
            return Err(Error::InvalidTopology("need at least one AP and one UE".into()));
        }
        let neighborhoods = build_neighborhoods(&gains, &params);
        let ext = enumerate_extended(&neighborhoods, &gains, &params);
        Ok(Network { params, gains, neighborhoods, ext })
    }

    pub fn n_aps(&self) -> usize {
        self.gains.n_aps()
    }

    pub fn n_ues(&self) -> usize {
        self.gains.n_ues()
    }

    /// UEs with at least one physical AP in range. A UE reachable only through a
    /// cooperating pair is not counted: scenarios without cooperation could never serve it.
    pub fn servable(&self) -> Vec<bool> {
        (0..self.n_ues()).map(|j| !self.neighborhoods.get(j).is_empty()).collect()
    }
}
