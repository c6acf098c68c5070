use crate::error::{shape_mismatch, Error, Result};
use crate::tensor::{broadcast_combine, concat_channels, conv2d, Combine, ConvKernel, Tensor};

/// Plain two-stream fusion operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Channel concatenation projected back to `C` by a 1x1 convolution.
    Cascade,
    Add,
    Mul,
}

pub fn baseline_fuse(
    f_c: &Tensor,
    f_t: &Tensor,
    mode: BaselineMode,
    cascade_proj: Option<&ConvKernel>,
) -> Result<Tensor> {
    if f_c.shape() != f_t.shape() {
        return Err(shape_mismatch("baseline_fuse", f_c.shape(), f_t.shape()));
    }
    match mode {
        BaselineMode::Add => broadcast_combine(f_c, f_t, Combine::Add),
        BaselineMode::Mul => broadcast_combine(f_c, f_t, Combine::Mul),
        BaselineMode::Cascade => {
            let proj =
                cascade_proj.ok_or(Error::MissingInput { op: "baseline_fuse", what: "cascade projection kernel" })?;
            let c = f_c.channels();
            if proj.dims() != [1, 1, 2 * c, c] {
                return Err(shape_mismatch(
                    "baseline_fuse",
                    alloc::format!("1x1x{}x{c} projection", 2 * c),
                    alloc::format!("{:?}", proj.dims()),
                ));
            }
            conv2d(&concat_channels(f_c, f_t)?, proj, 0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{random_kernel, random_tensor, rng};
    use crate::tensor::Shape;
    use alloc::vec;

    #[test]
    fn add_zero_and_mul_one_are_identities() {
        let s = Shape::new(3, 4, 2).unwrap();
        let f = random_tensor(&mut rng(5), s, 1.0);
        let add = baseline_fuse(&f, &Tensor::zeros(s), BaselineMode::Add, None).unwrap();
        let mul = baseline_fuse(&f, &Tensor::filled(s, 1.0), BaselineMode::Mul, None).unwrap();
        assert_eq!(add, f);
        assert_eq!(mul, f);
    }

    #[test]
    fn selector_projection_passes_color_through() {
        let s = Shape::new(4, 3, 3).unwrap();
        let mut r = rng(9);
        let (f_c, f_t) = (random_tensor(&mut r, s, 2.0), random_tensor(&mut r, s, 2.0));
        let c = 3;
        let mut w = vec![0.0; 2 * c * c];
        for i in 0..c {
            w[i * c + i] = 1.0;
        }
        let proj = ConvKernel::new(1, 2 * c, c, w, vec![0.0; c]).unwrap();
        assert_eq!(baseline_fuse(&f_c, &f_t, BaselineMode::Cascade, Some(&proj)).unwrap(), f_c);
    }

    #[test]
    fn cascade_requires_projection_of_right_shape() {
        let s = Shape::new(2, 2, 2).unwrap();
        let f = Tensor::zeros(s);
        assert!(matches!(baseline_fuse(&f, &f, BaselineMode::Cascade, None), Err(Error::MissingInput { .. })));
        let wrong = random_kernel(&mut rng(1), 1, 2, 2);
        assert!(baseline_fuse(&f, &f, BaselineMode::Cascade, Some(&wrong)).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Tensor::zeros(Shape::new(2, 2, 2).unwrap());
        let b = Tensor::zeros(Shape::new(2, 3, 2).unwrap());
        assert!(baseline_fuse(&a, &b, BaselineMode::Add, None).is_err());
    }
}
