#pragma once

// Netpbm images and masks, kernel matrices, and CSV energy traces.

#include "dgflow/convolution.hpp"
#include "dgflow/flow.hpp"
#include "dgflow/functionals.hpp"
#include "dgflow/grid.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <locale>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace dgflow {

class FormatError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Unit: pixel v -> v / maxval. Byte: pixel v -> 255 * v / maxval (raw values for 8-bit files).
enum class Scaling { Unit, Byte };

inline double scaling_range(Scaling s) { return s == Scaling::Unit ? 1.0 : 255.0; }

namespace detail {

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::string_view bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

// Cursor over a netpbm header: whitespace and '#' comments between tokens.
struct PnmCursor
{
    std::string_view buf;
    std::size_t pos = 0;

    void skip_space()
    {
        while (pos < buf.size()) {
            const char c = buf[pos];
            if (c == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
                ++pos;
            } else {
                break;
            }
        }
    }

    unsigned long number(const char* what)
    {
        skip_space();
        unsigned long v = 0;
        auto [p, ec] = std::from_chars(buf.data() + pos, buf.data() + buf.size(), v);
        if (ec != std::errc() || p == buf.data() + pos)
            throw FormatError(std::string("malformed netpbm header: expected ") + what);
        pos = std::size_t(p - buf.data());
        return v;
    }
};

struct Pnm
{
    std::size_t width = 0, height = 0, channels = 0;
    unsigned long maxval = 0;
    std::vector<std::uint32_t> samples; // interleaved, raster order
};

inline Pnm parse_pnm(std::string_view bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("not a netpbm file (bad magic)");
    const char kind = bytes[1];
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6')
        throw FormatError(std::string("unsupported netpbm magic P") + kind);
    const bool ascii = kind == '2' || kind == '3';

    Pnm img;
    img.channels = (kind == '3' || kind == '6') ? 3 : 1;
    PnmCursor cur{bytes, 2};
    img.width = cur.number("width");
    img.height = cur.number("height");
    img.maxval = cur.number("maxval");
    if (img.width == 0 || img.height == 0) throw FormatError("netpbm image has zero size");
    if (img.maxval == 0 || img.maxval > 65535) throw FormatError("netpbm maxval out of range");

    const std::size_t count = img.width * img.height * img.channels;
    img.samples.resize(count);
    if (ascii) {
        for (std::size_t k = 0; k < count; ++k) {
            unsigned long v = 0;
            try {
                v = cur.number("sample");
            } catch (const FormatError&) {
                throw FormatError("truncated netpbm payload");
            }
            if (v > img.maxval) throw FormatError("netpbm sample exceeds maxval");
            img.samples[k] = std::uint32_t(v);
        }
    } else {
        // Exactly one whitespace byte separates maxval from the raster.
        if (cur.pos >= bytes.size()) throw FormatError("truncated netpbm payload");
        ++cur.pos;
        const std::size_t bps = img.maxval > 255 ? 2 : 1;
        if (bytes.size() - cur.pos < count * bps) throw FormatError("truncated netpbm payload");
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + cur.pos);
        for (std::size_t k = 0; k < count; ++k) {
            const std::uint32_t v = bps == 2 ? (std::uint32_t(p[2 * k]) << 8) | p[2 * k + 1] : p[k];
            if (v > img.maxval) throw FormatError("netpbm sample exceeds maxval");
            img.samples[k] = v;
        }
    }
    return img;
}

} // namespace detail

// PGM (P2/P5) gives one channel, PPM (P3/P6) three.
inline ImageGrid read_image(const std::string& path, Scaling scaling = Scaling::Unit)
{
    const auto pnm = detail::parse_pnm(detail::read_file(path));
    Shape s{pnm.width, pnm.height, pnm.channels};
    ImageGrid u(s);
    const double factor = scaling_range(scaling) / double(pnm.maxval);
    const std::size_t npix = s.pixels();
    for (std::size_t k = 0; k < npix; ++k)
        for (std::size_t c = 0; c < s.channels; ++c) u[c * npix + k] = double(pnm.samples[k * s.channels + c]) * factor;
    return u;
}

// Clamps to the scaling range and rounds to the nearest of maxval+1 levels.
inline std::string encode_image(const ImageGrid& u, unsigned maxval = 255, Scaling scaling = Scaling::Unit,
                                bool ascii = false)
{
    if (maxval != 255 && maxval != 65535) throw std::invalid_argument("maxval must be 255 or 65535");
    if (u.channels() != 1 && u.channels() != 3) throw std::invalid_argument("only 1- or 3-channel images can be written");
    const bool color = u.channels() == 3;
    std::string out;
    out += ascii ? (color ? "P3\n" : "P2\n") : (color ? "P6\n" : "P5\n");
    out += std::to_string(u.width()) + " " + std::to_string(u.height()) + "\n" + std::to_string(maxval) + "\n";

    const double range = scaling_range(scaling);
    const std::size_t npix = u.shape().pixels();
    for (std::size_t k = 0; k < npix; ++k) {
        for (std::size_t c = 0; c < u.channels(); ++c) {
            const double v = std::clamp(u[c * npix + k] / range, 0.0, 1.0);
            const auto q = static_cast<std::uint32_t>(std::lround(v * double(maxval)));
            if (ascii) {
                out += std::to_string(q);
                out += (c + 1 == u.channels() && (k + 1) % u.width() == 0) ? '\n' : ' ';
            } else if (maxval > 255) {
                out += char((q >> 8) & 0xff);
                out += char(q & 0xff);
            } else {
                out += char(q);
            }
        }
    }
    return out;
}

inline void write_image(const std::string& path, const ImageGrid& u, unsigned maxval = 255,
                        Scaling scaling = Scaling::Unit, bool ascii = false)
{
    detail::write_file(path, encode_image(u, maxval, scaling, ascii));
}

// Pixels > 0 lie inside the inpainting domain.
inline Mask read_mask(const std::string& path)
{
    const auto pnm = detail::parse_pnm(detail::read_file(path));
    if (pnm.channels != 1) throw FormatError("mask must be a PGM image");
    std::vector<std::uint8_t> in(pnm.samples.size());
    for (std::size_t k = 0; k < in.size(); ++k) in[k] = pnm.samples[k] > 0 ? 1 : 0;
    return Mask(pnm.width, pnm.height, std::move(in));
}

inline void write_mask(const std::string& path, const Mask& m)
{
    Shape s{m.width, m.height, 1};
    ImageGrid g(s);
    for (std::size_t k = 0; k < m.inside.size(); ++k) g[k] = m.inside[k] ? 1.0 : 0.0;
    write_image(path, g, 255);
}

// Whitespace-separated matrix, one kernel row (fixed y) per line.
inline Kernel read_kernel(const std::string& path)
{
    std::istringstream in(detail::read_file(path));
    in.imbue(std::locale::classic());
    std::vector<double> w;
    std::size_t cols = 0, rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        ls.imbue(std::locale::classic());
        std::size_t n = 0;
        double v;
        while (ls >> v) {
            w.push_back(v);
            ++n;
        }
        if (!ls.eof()) throw FormatError("kernel file: non-numeric entry");
        if (n == 0) continue;
        if (cols == 0) cols = n;
        if (n != cols) throw FormatError("kernel file: rows have different lengths");
        ++rows;
    }
    if (rows == 0) throw FormatError("kernel file is empty");
    return Kernel(cols, rows, std::move(w));
}

// ---------------------------------------------------------------------------
// Trace CSV. Numbers use the shortest representation that reads back to the
// same double, independent of the locale.

inline constexpr std::string_view trace_header = "step,energy,grad_norm,tau,inner_iters,wall_ms";

namespace detail {

inline void append_number(std::string& out, double v)
{
    std::array<char, 64> buf;
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    out.append(buf.data(), p);
}

inline void append_number(std::string& out, std::size_t v)
{
    std::array<char, 32> buf;
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    out.append(buf.data(), p);
}

template <class T>
T parse_field(std::string_view s, std::size_t line)
{
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw FormatError("trace line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

} // namespace detail

inline std::string format_trace(const FlowTrace& trace)
{
    std::string out(trace_header);
    out += '\n';
    for (const auto& r : trace.rows) {
        detail::append_number(out, r.step);
        out += ',';
        detail::append_number(out, r.energy);
        out += ',';
        detail::append_number(out, r.grad_norm);
        out += ',';
        detail::append_number(out, r.tau);
        out += ',';
        detail::append_number(out, r.inner_iters);
        out += ',';
        detail::append_number(out, r.wall_ms);
        out += '\n';
    }
    return out;
}

inline FlowTrace parse_trace(std::string_view text)
{
    FlowTrace trace;
    std::size_t line_no = 0, pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != trace_header) throw FormatError("trace: unexpected header '" + std::string(line) + "'");
            header_seen = true;
            continue;
        }
        std::array<std::string_view, 6> f;
        std::size_t n = 0, start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            if (n == f.size()) throw FormatError("trace line " + std::to_string(line_no) + ": too many fields");
            f[n++] = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (n != f.size()) throw FormatError("trace line " + std::to_string(line_no) + ": expected 6 fields");
        TraceRow r;
        r.step = detail::parse_field<std::size_t>(f[0], line_no);
        r.energy = detail::parse_field<double>(f[1], line_no);
        r.grad_norm = detail::parse_field<double>(f[2], line_no);
        r.tau = detail::parse_field<double>(f[3], line_no);
        r.inner_iters = detail::parse_field<std::size_t>(f[4], line_no);
        r.wall_ms = detail::parse_field<double>(f[5], line_no);
        if (!trace.rows.empty() && r.step <= trace.rows.back().step)
            throw FormatError("trace line " + std::to_string(line_no) + ": step column not increasing");
        trace.rows.push_back(r);
    }
    if (!header_seen) throw FormatError("trace: missing header");
    return trace;
}

inline void write_trace(const std::string& path, const FlowTrace& trace) { detail::write_file(path, format_trace(trace)); }

inline FlowTrace read_trace(const std::string& path) { return parse_trace(detail::read_file(path)); }

} // namespace dgflow
