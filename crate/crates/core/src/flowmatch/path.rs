use crate::diffengine::Tensor;

use super::FlowError;

/// Flow time: `t = 0` is the clean data endpoint, `t = 1` pure noise.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FlowTime(f64);

impl FlowTime {
    pub const DATA: FlowTime = FlowTime(0.0);
    pub const NOISE: FlowTime = FlowTime(1.0);

    pub fn new(t: f64) -> Result<Self, FlowError> {
        if (0.0..=1.0).contains(&t) {
            Ok(Self(t))
        } else {
            Err(FlowError::TimeOutOfRange(t))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_shapes(x1: &Tensor, x0: &Tensor) -> Result<(), FlowError> {
    if x1.shape() != x0.shape() {
        return Err(FlowError::ShapeMismatch {
            data: x1.shape().to_vec(),
            noise: x0.shape().to_vec(),
        });
    }
    Ok(())
}

/// Linear path `x_t = (1 - t)·x1 + t·x0` between data `x1` and noise `x0`.
pub fn sample_path(x1: &Tensor, x0: &Tensor, t: FlowTime) -> Result<Tensor, FlowError> {
    check_shapes(x1, x0)?;
    let t = t.value();
    if t == 0.0 {
        return Ok(x1.clone());
    }
    if t == 1.0 {
        return Ok(x0.clone());
    }
    let data = x1
        .data()
        .iter()
        .zip(x0.data())
        .map(|(&a, &b)| (1.0 - t) * a + t * b)
        .collect();
    Ok(Tensor::new(x1.shape().to_vec(), data).expect("same shape"))
}

/// Conditional velocity `x1 - x0`; it points towards the data and does not
/// depend on `t`.
pub fn target_velocity(x1: &Tensor, x0: &Tensor) -> Result<Tensor, FlowError> {
    check_shapes(x1, x0)?;
    let data = x1.data().iter().zip(x0.data()).map(|(a, b)| a - b).collect();
    Ok(Tensor::new(x1.shape().to_vec(), data).expect("same shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let x1 = Tensor::row(&[2.0, -0.0, 1e-300]);
        let x0 = Tensor::row(&[0.0, 5.0, -3.0]);
        assert_eq!(sample_path(&x1, &x0, FlowTime::DATA).unwrap(), x1);
        assert_eq!(sample_path(&x1, &x0, FlowTime::NOISE).unwrap(), x0);
        let x = sample_path(
            &Tensor::row(&[2.0]),
            &Tensor::row(&[0.0]),
            FlowTime::new(0.25).unwrap(),
        )
        .unwrap();
        assert_eq!(x.data(), &[1.5]);
    }

    #[test]
    fn velocity_cases() {
        let a = Tensor::row(&[1.0, 3.0]);
        assert_eq!(target_velocity(&a, &a).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(
            target_velocity(&Tensor::row(&[2.0]), &Tensor::row(&[0.0])).unwrap().data(),
            &[2.0]
        );
        assert_eq!(
            target_velocity(&Tensor::row(&[1.0, -1.0]), &Tensor::row(&[0.5, 0.5]))
                .unwrap()
                .data(),
            &[0.5, -1.5]
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::row(&[1.0, 2.0]);
        let b = Tensor::row(&[1.0]);
        assert!(sample_path(&a, &b, FlowTime::DATA).is_err());
        assert!(target_velocity(&a, &b).is_err());
        assert!(FlowTime::new(1.5).is_err());
    }
}
