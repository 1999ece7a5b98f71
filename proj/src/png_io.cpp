#include "qaparse/dataset_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace qaparse {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode)
{
    File f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_error_handler(png_structp png, png_const_charp message)
{
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = message;
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

} // namespace

void write_label_png(const std::filesystem::path& path, const LabelPlane& labels)
{
    File file = open_file(path, "wb");
    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
    if (!png) throw IoError("libpng: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows(std::size_t(labels.rows()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("writing " + path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(labels.cols()), png_uint_32(labels.rows()), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    for (Eigen::Index y = 0; y < labels.rows(); ++y)
        rows[std::size_t(y)] = const_cast<png_bytep>(labels.data() + y * labels.cols());
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw IoError("writing " + path.string() + ": flush failed");
}

LabelPlane read_label_png(const std::filesystem::path& path)
{
    File file = open_file(path, "rb");
    unsigned char signature[8] = {};
    if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0)
        throw FormatError(path.string() + ": not a PNG file");

    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
    if (!png) throw IoError("libpng: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    LabelPlane out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() + ": label maps must be 8-bit single-channel PNG");
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    out.resize(Eigen::Index(height), Eigen::Index(width));
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = out.data() + Eigen::Index(y) * width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace qaparse
