#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>

#include <fftw3.h>

namespace slowlight::detail {

// FFTW planning is not thread-safe; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

/// Owns a forward/backward pair of length-n complex FFTW plans and their buffers.
class FftPair {
public:
    explicit FftPair(std::size_t n) : n_(n)
    {
        if (n == 0) throw std::invalid_argument("FftPair: zero length");
        std::lock_guard lock(fftw_planner_mutex());
        in_ = fftw_alloc_complex(n);
        out_ = fftw_alloc_complex(n);
        fwd_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    FftPair(const FftPair&) = delete;
    FftPair& operator=(const FftPair&) = delete;
    ~FftPair()
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(in_);
        fftw_free(out_);
    }

    std::size_t size() const { return n_; }

    /// out[m] = sum_n in[n] exp(-2 pi i m n / N), unnormalized.
    void forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out)
    {
        run(fwd_, in, out);
    }
    /// out[n] = sum_m in[m] exp(+2 pi i m n / N), unnormalized.
    void backward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out)
    {
        run(bwd_, in, out);
    }

private:
    void run(fftw_plan p, std::span<const std::complex<double>> in, std::span<std::complex<double>> out)
    {
        if (in.size() != n_ || out.size() != n_) throw std::invalid_argument("FftPair: size mismatch");
        auto* buf_in = reinterpret_cast<std::complex<double>*>(in_);
        auto* buf_out = reinterpret_cast<std::complex<double>*>(out_);
        for (std::size_t i = 0; i < n_; ++i) buf_in[i] = in[i];
        fftw_execute(p);
        for (std::size_t i = 0; i < n_; ++i) out[i] = buf_out[i];
    }

    std::size_t n_;
    fftw_complex* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

} // namespace slowlight::detail
