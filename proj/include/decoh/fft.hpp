#pragma once

#include <fftw3.h>

#include <memory>
#include <vector>

#include "decoh/types.hpp"

namespace decoh::fft {

enum class Direction { forward = FFTW_FORWARD, backward = FFTW_BACKWARD };

// In-place unnormalized complex DFT over a row-major array with the given
// extents. Forward uses exp(-2 pi i jk/N), backward exp(+2 pi i jk/N).
inline void transform(std::vector<cplx>& data, const std::vector<int>& extents, Direction dir) {
    size_t total = 1;
    for (int n : extents) total *= static_cast<size_t>(n);
    if (total != data.size()) throw DomainError("fft: extents do not match data size");
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan = fftw_plan_dft(static_cast<int>(extents.size()), extents.data(), ptr, ptr,
                                   static_cast<int>(dir), FFTW_ESTIMATE);
    if (plan == nullptr) throw Error("fft: planning failed");
    fftw_execute(plan);
    fftw_destroy_plan(plan);
}

// Plan reused across many 1-d transforms of the same length.
class Plan1D {
public:
    Plan1D(int n, Direction dir) : n_(n), buf_(static_cast<size_t>(n)) {
        auto* ptr = reinterpret_cast<fftw_complex*>(buf_.data());
        plan_ = fftw_plan_dft_1d(n, ptr, ptr, static_cast<int>(dir), FFTW_ESTIMATE);
        if (plan_ == nullptr) throw Error("fft: planning failed");
    }
    ~Plan1D() { fftw_destroy_plan(plan_); }
    Plan1D(const Plan1D&) = delete;
    Plan1D& operator=(const Plan1D&) = delete;

    std::vector<cplx>& buffer() { return buf_; }
    void execute() { fftw_execute(plan_); }
    int size() const { return n_; }

private:
    int n_;
    std::vector<cplx> buf_;
    fftw_plan plan_;
};

}  // namespace decoh::fft
