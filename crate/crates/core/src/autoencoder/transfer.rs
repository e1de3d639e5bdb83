use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{AeConfig, AeError, AutoencoderModel, Provenance};
use crate::level::LabelVocabulary;
use crate::scalar::Scalar;

/// Standard deviation of the weights that connect the new label features.
pub const TRANSFER_INIT_STD: f64 = 0.01;

impl<T: Scalar> AutoencoderModel<T> {
    /// Grow a trained label-free parent into a label-conditioned child.
    ///
    /// Convolution weights are copied verbatim. The first dense layer gains
    /// `n` input rows and the second gains `n` output columns; those start
    /// from N(0, 0.01²) drawn from `config.seed`, with zero label-head
    /// biases. Everything else is copied.
    pub fn transfer(
        parent: &AutoencoderModel<T>,
        config: AeConfig,
        vocabulary: Option<&LabelVocabulary>,
    ) -> Result<Self, AeError> {
        let incompatible = |m: String| Err(AeError::IncompatibleParent(m));
        if !parent.is_trained() {
            return incompatible("parent has not been trained".into());
        }
        if parent.config.n_labels != 0 {
            return incompatible(format!("parent has {} labels; expected a label-free parent", parent.config.n_labels));
        }
        let p = &parent.config;
        if p.input_shape != config.input_shape
            || p.filters != config.filters
            || p.kernel != config.kernel
            || p.embedding_size != config.embedding_size
        {
            return incompatible(format!(
                "geometry differs: parent {:?}/{:?}/k{}/e{}, child {:?}/{:?}/k{}/e{}",
                p.input_shape,
                p.filters,
                p.kernel,
                p.embedding_size,
                config.input_shape,
                config.filters,
                config.kernel,
                config.embedding_size
            ));
        }
        let mut child = Self::zeroed(config, vocabulary)?;
        let (s, n, e) = (child.config.structure_features(), child.config.n_labels, child.config.embedding_size);
        let mut rng = ChaCha8Rng::seed_from_u64(child.config.seed);
        let normal = Normal::new(0.0, TRANSFER_INIT_STD).expect("positive std");
        let mut draw = || T::from_f64_lossy(normal.sample(&mut rng));

        child.encoder.set_params(parent.encoder.params().to_vec())?;
        child.decoder.set_params(parent.decoder.params().to_vec())?;

        // fc_in: weight [S + n, E], the parent's [S, E] sits in the first S rows
        {
            let pw = parent.fc_in.params()[0].data();
            let pb = parent.fc_in.params()[1].data();
            let params = child.fc_in.params_mut();
            let w = params[0].data_mut();
            w[..s * e].copy_from_slice(pw);
            w[s * e..].iter_mut().for_each(|v| *v = draw());
            params[1].data_mut().copy_from_slice(pb);
        }
        // fc_out: weight [E, S + n], the parent's [E, S] fills the first S columns
        {
            let pw = parent.fc_out.params()[0].data();
            let pb = parent.fc_out.params()[1].data();
            let params = child.fc_out.params_mut();
            let w = params[0].data_mut();
            for r in 0..e {
                let row = &mut w[r * (s + n)..(r + 1) * (s + n)];
                row[..s].copy_from_slice(&pw[r * s..(r + 1) * s]);
                row[s..].iter_mut().for_each(|v| *v = draw());
            }
            let b = params[1].data_mut();
            b[..s].copy_from_slice(pb);
            b[s..].iter_mut().for_each(|v| *v = T::zero());
        }
        child.provenance = Provenance::Transfer { parent: parent.id() };
        Ok(child)
    }
}
