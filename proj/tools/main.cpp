#include "mtsconv/harness.hpp"

int main(int argc, char** argv) { return mtsconv::cli_dispatch(argc, argv); }
