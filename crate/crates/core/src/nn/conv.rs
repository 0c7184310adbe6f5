use super::gemm::{gemm, Op};
use super::param::Parameter;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Valid (unpadded) strided 2-D cross-correlation followed by ReLU.
///
/// Input `[n, c_in, h, w]`, output `[n, c_out, h', w']` with
/// `h' = (h - kernel) / stride + 1`. Weights are `[c_out, c_in * kernel^2]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub weight: Parameter,
    pub bias: Parameter,
    cols: Vec<f64>,
    output: Option<Tensor>,
}

pub fn conv_out_size(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel).then(|| (len - kernel) / stride + 1)
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        in_height: usize,
        in_width: usize,
        weight: Parameter,
        bias: Parameter,
    ) -> Result<Self> {
        if conv_out_size(in_height, kernel, stride).is_none() || conv_out_size(in_width, kernel, stride).is_none() {
            return Err(Error::Dimension(format!(
                "{in_height}x{in_width} input is smaller than the {kernel}x{kernel} kernel"
            )));
        }
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            in_height,
            in_width,
            weight,
            bias,
            cols: Vec::new(),
            output: None,
        })
    }

    pub fn out_height(&self) -> usize {
        (self.in_height - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let (oh, ow, k, s) = (self.out_height(), self.out_width(), self.kernel, self.stride);
        let (h, w) = (self.in_height, self.in_width);
        let pl = self.patch_len();
        for oy in 0..oh {
            for ox in 0..ow {
                let dst = &mut cols[(oy * ow + ox) * pl..(oy * ow + ox + 1) * pl];
                let mut q = 0;
                for c in 0..self.in_channels {
                    for ky in 0..k {
                        let src = c * h * w + (oy * s + ky) * w + ox * s;
                        dst[q..q + k].copy_from_slice(&img[src..src + k]);
                        q += k;
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let (oh, ow, k, s) = (self.out_height(), self.out_width(), self.kernel, self.stride);
        let (h, w) = (self.in_height, self.in_width);
        let pl = self.patch_len();
        for oy in 0..oh {
            for ox in 0..ow {
                let src = &cols[(oy * ow + ox) * pl..(oy * ow + ox + 1) * pl];
                let mut q = 0;
                for c in 0..self.in_channels {
                    for ky in 0..k {
                        let dst = c * h * w + (oy * s + ky) * w + ox * s;
                        for kx in 0..k {
                            img[dst + kx] += src[q + kx];
                        }
                        q += k;
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: Tensor, record: bool) -> Result<Tensor> {
        let want = [self.in_channels, self.in_height, self.in_width];
        if x.shape().len() != 4 || x.shape()[1..] != want {
            return Err(Error::Dimension(format!(
                "conv2d expects [n, {}, {}, {}], got {:?}",
                want[0],
                want[1],
                want[2],
                x.shape()
            )));
        }
        let n = x.rows();
        let p = self.out_height() * self.out_width();
        let pl = self.patch_len();
        let in_len = x.row_len();
        let out_len = self.out_channels * p;
        let mut cols = vec![0.0; n * p * pl];
        let mut out = vec![0.0; n * out_len];
        for i in 0..n {
            let c = &mut cols[i * p * pl..(i + 1) * p * pl];
            self.im2col(&x.data()[i * in_len..(i + 1) * in_len], c);
            let o = &mut out[i * out_len..(i + 1) * out_len];
            for (ch, row) in o.chunks_exact_mut(p).enumerate() {
                row.fill(self.bias.value.data()[ch]);
            }
            gemm(self.out_channels, pl, p, 1.0, self.weight.value.data(), Op::N, c, Op::T, 1.0, o);
        }
        for v in &mut out {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let y = Tensor::from_vec(&[n, self.out_channels, self.out_height(), self.out_width()], out)?;
        if record {
            self.cols = cols;
            self.output = Some(y.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let y = self.output.as_ref().expect("conv backward without recorded forward");
        let n = y.rows();
        let p = self.out_height() * self.out_width();
        let pl = self.patch_len();
        let out_len = self.out_channels * p;
        let mut dpre: Vec<f64> = dy
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
            .collect();
        let in_len = self.in_channels * self.in_height * self.in_width;
        let mut dx = need_dx.then(|| vec![0.0; n * in_len]);
        let mut dcols = vec![0.0; p * pl];
        for i in 0..n {
            let g = &mut dpre[i * out_len..(i + 1) * out_len];
            let c = &self.cols[i * p * pl..(i + 1) * p * pl];
            if !self.weight.frozen {
                gemm(self.out_channels, p, pl, 1.0, g, Op::N, c, Op::N, 1.0, self.weight.grad.data_mut());
            }
            if !self.bias.frozen {
                for (ch, row) in g.chunks_exact(p).enumerate() {
                    self.bias.grad.data_mut()[ch] += row.iter().sum::<f64>();
                }
            }
            if let Some(dx) = dx.as_mut() {
                gemm(p, self.out_channels, pl, 1.0, g, Op::T, self.weight.value.data(), Op::N, 0.0, &mut dcols);
                self.col2im(&dcols, &mut dx[i * in_len..(i + 1) * in_len]);
            }
        }
        dx.map(|d| {
            Tensor::from_vec(&[n, self.in_channels, self.in_height, self.in_width], d).expect("shape")
        })
    }

    pub(crate) fn active_mask(&self) -> impl Iterator<Item = bool> + '_ {
        self.output.iter().flat_map(|t| t.data().iter().map(|&v| v > 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(c_in: usize, c_out: usize, h: usize, w: usize, weights: Vec<f64>) -> Conv2d {
        Conv2d::new(
            c_in,
            c_out,
            5,
            2,
            h,
            w,
            Parameter::new("w", Tensor::from_vec(&[c_out, c_in * 25], weights).unwrap()),
            Parameter::zeros("b", &[c_out]),
        )
        .unwrap()
    }

    #[test]
    fn spatial_arithmetic_of_three_default_layers() {
        assert_eq!(conv_out_size(32, 5, 2), Some(14));
        assert_eq!(conv_out_size(14, 5, 2), Some(5));
        assert_eq!(conv_out_size(5, 5, 2), Some(1));
        assert_eq!(conv_out_size(4, 5, 2), None);
    }

    #[test]
    fn too_small_input_is_dimension_error() {
        let r = Conv2d::new(1, 1, 5, 2, 4, 9, Parameter::zeros("w", &[1, 25]), Parameter::zeros("b", &[1]));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn delta_kernel_subsamples() {
        let mut k = vec![0.0; 25];
        k[12] = 1.0;
        let mut l = conv(1, 1, 11, 11, k);
        let img: Vec<f64> = (0..121).map(|i| i as f64 * 0.01).collect();
        let y = l.forward(Tensor::from_vec(&[1, 1, 11, 11], img.clone()).unwrap(), false).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        for oy in 0..4 {
            for ox in 0..4 {
                let src = (oy * 2 + 2) * 11 + ox * 2 + 2;
                assert_eq!(y.data()[oy * 4 + ox], img[src]);
            }
        }
    }

    #[test]
    fn ones_kernel_on_constant_field() {
        let mut l = conv(1, 1, 9, 9, vec![1.0; 25]);
        let y = l.forward(Tensor::full(&[1, 1, 9, 9], 0.3), false).unwrap();
        assert!(y.data().iter().all(|&v| (v - 7.5).abs() < 1e-12));
        let y = l.forward(Tensor::full(&[1, 1, 9, 9], -0.3), false).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0), "ReLU clips negative responses");
    }
}
