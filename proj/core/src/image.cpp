#include "dronekey/image.hpp"

#include <fstream>

#include "dronekey/errors.hpp"

namespace dronekey {

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open for writing: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!f) throw LoadError("write failed: " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw LoadError("not a binary PPM (expected P6): " + path);
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 255) throw LoadError("bad PPM header: " + path);
  f.get();  // single whitespace after maxval
  Image img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw LoadError("truncated pixel data: " + path);
  return img;
}

}  // namespace dronekey
