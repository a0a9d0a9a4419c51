#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "peel/prng.hpp"
#include "peel/tar.hpp"

using namespace peel;
namespace fs = std::filesystem;

TEST_CASE("tar write/read round trip") {
  TarWriter tw;
  const Bytes a = prng_bytes(1, 1000);   // not block aligned
  const Bytes b = prng_bytes(2, 1024);   // block aligned
  const Bytes empty;
  tw.add("original.bin", a);
  tw.add("dumps/dump_0000.bin", b);
  tw.add("meta.json", empty);
  const Bytes archive = tw.finish();

  CHECK(archive.size() % kTarBlock == 0);

  auto entries = tar_read(archive);
  REQUIRE(entries.ok());
  REQUIRE(entries->size() == 3);
  CHECK((*entries)[0].name == "original.bin");
  CHECK((*entries)[0].data == a);
  CHECK((*entries)[1].name == "dumps/dump_0000.bin");
  CHECK((*entries)[1].data == b);
  CHECK((*entries)[2].name == "meta.json");
  CHECK((*entries)[2].data.empty());
}

TEST_CASE("tar output is deterministic") {
  auto build = [] {
    TarWriter tw;
    tw.add("x", prng_bytes(3, 777));
    tw.add("y", prng_bytes(4, 31));
    return tw.finish();
  };
  CHECK(build() == build());
}

TEST_CASE("tar reader rejects a corrupted checksum") {
  TarWriter tw;
  tw.add("file", prng_bytes(5, 100));
  Bytes archive = tw.finish();
  archive[150] = '9';
  auto r = tar_read(archive);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error() == Errc::Malformed);
}

TEST_CASE("tar reader rejects truncated data") {
  TarWriter tw;
  tw.add("file", prng_bytes(6, 2000));
  Bytes archive = tw.finish();
  archive.resize(kTarBlock + 100);
  auto r = tar_read(archive);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error() == Errc::Truncated);
}

TEST_CASE("system tar lists our archives") {
  if (std::system("tar --version >/dev/null 2>&1") != 0) {
    SUCCEED("system tar not available; skipping interop check");
    return;
  }
  TarWriter tw;
  tw.add("original.bin", prng_bytes(7, 512));
  tw.add("dumps/dump_0000.bin", prng_bytes(8, 4096));
  const Bytes archive = tw.finish();

  const fs::path dir = fs::temp_directory_path() / "peel_tar_interop";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path tar_path = dir / "t.tar";
  {
    std::ofstream f(tar_path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(archive.data()),
            static_cast<std::streamsize>(archive.size()));
  }
  const std::string cmd =
      "tar -tf " + tar_path.string() + " > " + (dir / "list.txt").string() + " 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  std::ifstream list(dir / "list.txt");
  std::string all((std::istreambuf_iterator<char>(list)), std::istreambuf_iterator<char>());
  CHECK(all.find("original.bin") != std::string::npos);
  CHECK(all.find("dumps/dump_0000.bin") != std::string::npos);
}
