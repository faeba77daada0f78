#include "cli_main.hpp"

int main(int argc, char** argv) { return shine::cli_main(argc, argv); }
