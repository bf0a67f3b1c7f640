#ifndef XMR_XMR_HPP
#define XMR_XMR_HPP

#include "error.hpp"
#include "ld.hpp"
#include "mrbma.hpp"
#include "pipelines.hpp"
#include "simgen.hpp"
#include "sumstats.hpp"
#include "twmr.hpp"
#include "uni_mr.hpp"
#include "util.hpp"

namespace xmr {
inline constexpr const char *kVersion = "0.1.0";
}

#endif // XMR_XMR_HPP
