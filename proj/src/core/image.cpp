#include "image.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <vector>

#include "common.hpp"

namespace xreid {

unsigned char quantize_pixel(double x) {
    double v = std::round((x + 1.0) * 127.5);
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    return static_cast<unsigned char>(v);
}

static double dequantize_pixel(unsigned char b) { return static_cast<double>(b) / 127.5 - 1.0; }

// ---- PPM (binary P6, maxval 255) ---------------------------------------------

namespace {

// reads the next token, skipping whitespace and '#' comments
std::string ppm_token(const std::string& s, size_t& pos) {
    while (pos < s.size()) {
        if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (start == pos) fail(Errc::io, "ppm: truncated header");
    return s.substr(start, pos - start);
}

}  // namespace

Tensor decode_ppm(const std::string& bytes) {
    size_t pos = 0;
    if (ppm_token(bytes, pos) != "P6") fail(Errc::io, "ppm: not a P6 file");
    const long w = std::stol(ppm_token(bytes, pos));
    const long h = std::stol(ppm_token(bytes, pos));
    const long maxval = std::stol(ppm_token(bytes, pos));
    if (w <= 0 || h <= 0) fail(Errc::io, "ppm: bad dimensions");
    if (maxval != 255) fail(Errc::io, "ppm: only maxval 255 supported");
    ++pos;  // single whitespace after maxval
    if (bytes.size() - pos < static_cast<size_t>(3 * w * h)) fail(Errc::io, "ppm: truncated pixels");
    Tensor img({3, h, w});
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (long c = 0; c < 3; ++c)
                img.data()[(c * h + y) * w + x] = dequantize_pixel(p[(y * w + x) * 3 + c]);
    return img;
}

std::string encode_ppm(const Tensor& img) {
    const auto& s = img.shape();
    if (s.size() != 3 || s[0] != 3) fail(Errc::invalid_argument, "encode_ppm: (3,H,W) required");
    const long h = s[1], w = s[2];
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + static_cast<size_t>(3 * h * w));
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (long c = 0; c < 3; ++c)
                out.push_back(static_cast<char>(quantize_pixel(img.data()[(c * h + y) * w + x])));
    return out;
}

// ---- JPEG ------------------------------------------------------------------------

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf setjmp_buffer;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(err->setjmp_buffer, 1);
}

}  // namespace

Tensor decode_jpeg(const std::string& bytes) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.setjmp_buffer)) {
        jpeg_destroy_decompress(&cinfo);
        fail(Errc::io, "jpeg: decode failed");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
                 static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const long w = cinfo.output_width, h = cinfo.output_height;
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    Tensor img({3, h, w});
    while (cinfo.output_scanline < cinfo.output_height) {
        const long y = cinfo.output_scanline;
        unsigned char* rp = row.data();
        jpeg_read_scanlines(&cinfo, &rp, 1);
        for (long x = 0; x < w; ++x)
            for (long c = 0; c < 3; ++c)
                img.data()[(c * h + y) * w + x] = dequantize_pixel(row[x * 3 + c]);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

// ---- resize ------------------------------------------------------------------------

Tensor resize_bilinear(const Tensor& img, long out_h, long out_w) {
    const auto& s = img.shape();
    if (s.size() != 3 || s[0] != 3) fail(Errc::invalid_argument, "resize: (3,H,W) required");
    const long h = s[1], w = s[2];
    if (h == out_h && w == out_w) return img;
    Tensor out({3, out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (long c = 0; c < 3; ++c) {
        const double* src = img.data() + c * h * w;
        double* dst = out.data() + c * out_h * out_w;
        for (long y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            if (fy < 0) fy = 0;
            if (fy > h - 1) fy = h - 1;
            const long y0 = static_cast<long>(fy);
            const long y1 = std::min(y0 + 1, h - 1);
            const double wy = fy - y0;
            for (long x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                if (fx < 0) fx = 0;
                if (fx > w - 1) fx = w - 1;
                const long x0 = static_cast<long>(fx);
                const long x1 = std::min(x0 + 1, w - 1);
                const double wx = fx - x0;
                const double top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
                const double bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
                dst[y * out_w + x] = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Tensor load_image(const std::string& path, long out_h, long out_w) {
    const std::string bytes = read_text_file(path);
    Tensor img;
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ppm") == 0) {
        img = decode_ppm(bytes);
    } else if ((path.size() >= 4 && path.compare(path.size() - 4, 4, ".jpg") == 0) ||
               (path.size() >= 5 && path.compare(path.size() - 5, 5, ".jpeg") == 0)) {
        img = decode_jpeg(bytes);
    } else {
        fail(Errc::invalid_argument, "load_image: unsupported extension: " + path);
    }
    return resize_bilinear(img, out_h, out_w);
}

void save_ppm(const std::string& path, const Tensor& img) {
    const std::string bytes = encode_ppm(img);
    write_binary_file_atomic(path, bytes.data(), bytes.size());
}

}  // namespace xreid
