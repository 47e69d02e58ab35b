# OISA Desk: referring audio-visual segmentation
