"""
Entry point for running specforce-diffusion as a module.
"""

from specforce_diffusion import main

if __name__ == "__main__":
    main()
