// Copyright 2026 The closnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Model descriptors: `dense:H`, `lowrank:H,r`, `pruned:H,d`, and
//! `clos:H,Ri,Rm,Ro[,relu|none]`. Each names the hidden layer of a
//! one-hidden-layer classifier `inputs -> H -> classes`; the output layer is
//! always dense with bias.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{
    Activation, ClosLayer, DenseLayer, InitRule, Layer, LowRankLayer, ParamCount, PrunedLayer,
};
use crate::scalar::Scalar;
use crate::topology::ClosSpec;
use crate::train::Model;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelDescriptor {
    Dense {
        hidden: usize,
    },
    LowRank {
        hidden: usize,
        rank: usize,
    },
    Pruned {
        hidden: usize,
        density: f64,
    },
    Clos {
        hidden: usize,
        input_routers: usize,
        middle_routers: usize,
        output_routers: usize,
        activation: Activation,
    },
}

impl ModelDescriptor {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelDescriptor::Dense { .. } => "dense",
            ModelDescriptor::LowRank { .. } => "lowrank",
            ModelDescriptor::Pruned { .. } => "pruned",
            ModelDescriptor::Clos { .. } => "clos",
        }
    }

    pub fn hidden(&self) -> usize {
        match *self {
            ModelDescriptor::Dense { hidden }
            | ModelDescriptor::LowRank { hidden, .. }
            | ModelDescriptor::Pruned { hidden, .. }
            | ModelDescriptor::Clos { hidden, .. } => hidden,
        }
    }

    /// Text after the `kind:` prefix.
    pub fn config(&self) -> String {
        let s = self.to_string();
        s[s.find(':').expect("kind prefix") + 1..].to_string()
    }

    pub fn clos_spec(&self, inputs: usize) -> Option<ClosSpec> {
        match *self {
            ModelDescriptor::Clos {
                hidden,
                input_routers,
                middle_routers,
                output_routers,
                ..
            } => Some(ClosSpec::new(
                inputs,
                hidden,
                input_routers,
                middle_routers,
                output_routers,
            )),
            _ => None,
        }
    }

    /// Checks every field against the data shape without building anything.
    pub fn validate(&self, inputs: usize) -> Result<()> {
        if self.hidden() == 0 {
            return Err(Error::Config(format!("{self}: hidden width must be >= 1")));
        }
        match *self {
            ModelDescriptor::LowRank { rank: 0, .. } => {
                Err(Error::Config(format!("{self}: rank must be >= 1")))
            }
            ModelDescriptor::Pruned { density, .. } if !(density > 0.0 && density <= 1.0) => {
                Err(Error::InvalidDensity(density))
            }
            ModelDescriptor::Clos { .. } => {
                self.clos_spec(inputs).expect("clos").validate()?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn hidden_layer<T: Scalar>(&self, inputs: usize, seed: u64) -> Result<Layer<T>> {
        self.validate(inputs)?;
        Ok(match *self {
            ModelDescriptor::Dense { hidden } => DenseLayer::new(inputs, hidden, true, seed).into(),
            ModelDescriptor::LowRank { hidden, rank } => {
                LowRankLayer::new(inputs, hidden, rank, seed).into()
            }
            ModelDescriptor::Pruned { hidden, density } => {
                PrunedLayer::new(inputs, hidden, density, seed)?.into()
            }
            ModelDescriptor::Clos { activation, .. } => {
                let spec = self.clos_spec(inputs).expect("clos").validate()?;
                ClosLayer::new(&spec, InitRule::BlockGlorot, seed, activation).into()
            }
        })
    }

    /// Hidden layer seeded with `seed`, output layer with `seed + 1`.
    pub fn build<T: Scalar>(&self, inputs: usize, classes: usize, seed: u64) -> Result<Model<T>> {
        let hidden = self.hidden_layer(inputs, seed)?;
        let head = DenseLayer::new(self.hidden(), classes, true, seed.wrapping_add(1));
        Model::new(vec![hidden, head.into()])
    }

    /// Parameter accounting of the hidden layer alone.
    pub fn hidden_params(&self, inputs: usize, seed: u64) -> Result<ParamCount> {
        Ok(self.hidden_layer::<f32>(inputs, seed)?.param_count())
    }
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ModelDescriptor::Dense { hidden } => write!(f, "dense:{hidden}"),
            ModelDescriptor::LowRank { hidden, rank } => write!(f, "lowrank:{hidden},{rank}"),
            ModelDescriptor::Pruned { hidden, density } => write!(f, "pruned:{hidden},{density}"),
            ModelDescriptor::Clos {
                hidden,
                input_routers,
                middle_routers,
                output_routers,
                activation,
            } => {
                write!(
                    f,
                    "clos:{hidden},{input_routers},{middle_routers},{output_routers}"
                )?;
                if activation != Activation::default() {
                    write!(f, ",{activation}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for ModelDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("model {s:?}: {why}"));
        let (kind, rest) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| bad("expected kind:args"))?;
        let fields: Vec<&str> = rest.split(',').map(str::trim).collect();
        let int = |i: usize| -> Result<usize> {
            fields
                .get(i)
                .ok_or_else(|| bad("too few fields"))?
                .parse()
                .map_err(|_| bad(&format!("field {} is not a non-negative integer", i + 1)))
        };
        let arity = |n: &[usize]| {
            if n.contains(&fields.len()) {
                Ok(())
            } else {
                Err(bad(&format!("expected {n:?} fields, got {}", fields.len())))
            }
        };
        match kind.trim() {
            "dense" => {
                arity(&[1])?;
                Ok(ModelDescriptor::Dense { hidden: int(0)? })
            }
            "lowrank" => {
                arity(&[2])?;
                Ok(ModelDescriptor::LowRank {
                    hidden: int(0)?,
                    rank: int(1)?,
                })
            }
            "pruned" => {
                arity(&[2])?;
                let density = fields[1]
                    .parse()
                    .map_err(|_| bad("density is not a number"))?;
                Ok(ModelDescriptor::Pruned {
                    hidden: int(0)?,
                    density,
                })
            }
            "clos" => {
                arity(&[4, 5])?;
                let activation = match fields.get(4) {
                    Some(a) => a.parse()?,
                    None => Activation::default(),
                };
                Ok(ModelDescriptor::Clos {
                    hidden: int(0)?,
                    input_routers: int(1)?,
                    middle_routers: int(2)?,
                    output_routers: int(3)?,
                    activation,
                })
            }
            other => Err(bad(&format!("unknown kind {other:?}"))),
        }
    }
}
